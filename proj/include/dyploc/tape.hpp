#ifndef DYPLOC_TAPE_HPP
#define DYPLOC_TAPE_HPP

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

namespace dyploc::nn {

using Mat = Eigen::MatrixXd;

// Handle into a Tape. Plain index; valid only for the tape that produced it.
struct Var {
  int idx = -1;
};

// Reverse-mode autodiff over dense double matrices. One tape per forward
// pass; backward() runs the recorded closures in reverse order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Mat value);

  const Mat& val(Var v) const { return nodes_[v.idx].value; }
  const Mat& grad(Var v) const { return nodes_[v.idx].grad; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cwise_mul(Var a, Var b);
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var tanh(Var a);
  Var relu(Var a);
  Var add_row_broadcast(Var a, Var row);     // a: T x d, row: 1 x d
  Var mul_col_broadcast(Var a, Var col);     // a: T x d, col: T x 1
  Var repeat_row(Var row, int times);        // 1 x d -> times x d
  Var rows(Var a, std::vector<int> indices); // gather rows
  Var cols(Var a, int start, int count);     // contiguous column slice
  Var concat_cols(const std::vector<Var>& parts);
  // Row-wise softmax after adding a constant mask (0 / -inf pattern).
  Var softmax_rows(Var a, const Mat* add_mask = nullptr);
  Var layer_norm_rows(Var a, Var gain_row, Var bias_row, double eps = 1e-5);
  // log(max(x, floor)); entries at the floor get zero gradient.
  Var log_floored(Var a, double floor);
  // Gather scalar entries into a column vector.
  Var pick(Var a, std::vector<std::pair<int, int>> coords);
  Var sum(Var a);  // 1 x 1

  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;  // empty for leaves
  };
  Var emplace(Mat value, std::function<void()> back);
  std::vector<Node> nodes_;
};

}  // namespace dyploc::nn

#endif
