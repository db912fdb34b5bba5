#ifndef DYPLOC_TESTS_SYNTHETIC_HPP
#define DYPLOC_TESTS_SYNTHETIC_HPP

#include <cstdint>
#include <vector>

#include "dyploc/content_model.hpp"

namespace dyploc::testsupport {

// Deterministic template task: content item k always realizes sentence
// template k, so gold plan labels and targets are exact. Items are stored in
// the (shuffled) order their sentences appear in the target.
std::vector<Sample> make_synthetic_corpus(int n_samples, std::uint64_t seed,
                                          int min_items = 2, int max_items = 4);

// The sentence template realized by concept index k.
TokenSeq template_sentence(int k);

}  // namespace dyploc::testsupport

#endif
