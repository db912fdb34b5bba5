#ifndef DYPLOC_TESTS_ORACLES_HPP
#define DYPLOC_TESTS_ORACLES_HPP

#include <Eigen/Dense>
#include <vector>

#include "dyploc/mixed_lm.hpp"

namespace dyploc::testsupport {

// Entrywise brute-force mixture sum (independent of mixture_step).
Eigen::VectorXd brute_force_mixture(
    const std::vector<Eigen::VectorXd>& item_dists, const Eigen::VectorXd& d);

// Straight-line reimplementation of the teacher-forced forward pass with
// plain Eigen arithmetic, reading the model's parameter store directly.
// Returns (l_gen, l_plan, total) with the given plan-loss weight.
mlm::TrainStepOutput straight_line_forward(const mlm::MixedLM& model,
                                           const mlm::EncodedSample& sample,
                                           double plan_loss_weight = 1.0);

}  // namespace dyploc::testsupport

#endif
