#include "dyploc/tape.hpp"

#include <cmath>

#include "dyploc/errors.hpp"

namespace dyploc::nn {

Var Tape::emplace(Mat value, std::function<void()> back) {
  Node n;
  n.grad = Mat::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Mat value) { return emplace(std::move(value), nullptr); }

Var Tape::add(Var a, Var b) {
  Mat v = val(a) + val(b);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, b, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad;
    nodes_[b.idx].grad += nodes_[out.idx].grad;
  });
}

Var Tape::sub(Var a, Var b) {
  Mat v = val(a) - val(b);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, b, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad;
    nodes_[b.idx].grad -= nodes_[out.idx].grad;
  });
}

Var Tape::cwise_mul(Var a, Var b) {
  Mat v = val(a).cwiseProduct(val(b));
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, b, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad.cwiseProduct(nodes_[b.idx].value);
    nodes_[b.idx].grad += nodes_[out.idx].grad.cwiseProduct(nodes_[a.idx].value);
  });
}

Var Tape::scale(Var a, double s) {
  Mat v = val(a) * s;
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, s, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad * s;
  });
}

Var Tape::matmul(Var a, Var b) {
  Mat v = val(a) * val(b);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, b, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad * nodes_[b.idx].value.transpose();
    nodes_[b.idx].grad += nodes_[a.idx].value.transpose() * nodes_[out.idx].grad;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Mat v = val(a) * val(b).transpose();
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, b, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad * nodes_[b.idx].value;
    nodes_[b.idx].grad += nodes_[out.idx].grad.transpose() * nodes_[a.idx].value;
  });
}

Var Tape::tanh(Var a) {
  Mat v = val(a).array().tanh().matrix();
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, out] {
    const Mat& y = nodes_[out.idx].value;
    nodes_[a.idx].grad += nodes_[out.idx].grad.cwiseProduct(
        (1.0 - y.array().square()).matrix());
  });
}

Var Tape::relu(Var a) {
  Mat v = val(a).cwiseMax(0.0);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, out] {
    Mat mask = (nodes_[a.idx].value.array() > 0.0).cast<double>().matrix();
    nodes_[a.idx].grad += nodes_[out.idx].grad.cwiseProduct(mask);
  });
}

Var Tape::add_row_broadcast(Var a, Var row) {
  Mat v = val(a).rowwise() + val(row).row(0);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, row, out] {
    nodes_[a.idx].grad += nodes_[out.idx].grad;
    nodes_[row.idx].grad.row(0) += nodes_[out.idx].grad.colwise().sum();
  });
}

Var Tape::mul_col_broadcast(Var a, Var col) {
  Mat v = val(a).array().colwise() * val(col).col(0).array();
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, col, out] {
    nodes_[a.idx].grad +=
        (nodes_[out.idx].grad.array().colwise() *
         nodes_[col.idx].value.col(0).array()).matrix();
    nodes_[col.idx].grad.col(0) +=
        nodes_[out.idx].grad.cwiseProduct(nodes_[a.idx].value).rowwise().sum();
  });
}

Var Tape::repeat_row(Var row, int times) {
  Mat v = val(row).row(0).replicate(times, 1);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, row, out] {
    nodes_[row.idx].grad.row(0) += nodes_[out.idx].grad.colwise().sum();
  });
}

Var Tape::rows(Var a, std::vector<int> indices) {
  Mat v(static_cast<int>(indices.size()), val(a).cols());
  for (int i = 0; i < v.rows(); ++i) v.row(i) = val(a).row(indices[i]);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, idx = std::move(indices), out] {
    for (int i = 0; i < static_cast<int>(idx.size()); ++i)
      nodes_[a.idx].grad.row(idx[i]) += nodes_[out.idx].grad.row(i);
  });
}

Var Tape::cols(Var a, int start, int count) {
  Mat v = val(a).middleCols(start, count);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, start, count, out] {
    nodes_[a.idx].grad.middleCols(start, count) += nodes_[out.idx].grad;
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  int total = 0;
  for (Var p : parts) total += static_cast<int>(val(p).cols());
  Mat v(val(parts[0]).rows(), total);
  int at = 0;
  for (Var p : parts) {
    v.middleCols(at, val(p).cols()) = val(p);
    at += static_cast<int>(val(p).cols());
  }
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, parts, out] {
    int at2 = 0;
    for (Var p : parts) {
      int c = static_cast<int>(nodes_[p.idx].value.cols());
      nodes_[p.idx].grad += nodes_[out.idx].grad.middleCols(at2, c);
      at2 += c;
    }
  });
}

Var Tape::softmax_rows(Var a, const Mat* add_mask) {
  Mat z = val(a);
  if (add_mask) z += *add_mask;
  Mat v(z.rows(), z.cols());
  for (int r = 0; r < z.rows(); ++r) {
    Eigen::RowVectorXd e = (z.row(r).array() - z.row(r).maxCoeff()).exp();
    v.row(r) = e / e.sum();
  }
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, out] {
    const Mat& y = nodes_[out.idx].value;
    const Mat& gy = nodes_[out.idx].grad;
    for (int r = 0; r < y.rows(); ++r) {
      double dot = y.row(r).dot(gy.row(r));
      nodes_[a.idx].grad.row(r) +=
          y.row(r).cwiseProduct(gy.row(r).array().matrix() -
                                Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
  });
}

Var Tape::layer_norm_rows(Var a, Var gain_row, Var bias_row, double eps) {
  const Mat& x = val(a);
  const int d = static_cast<int>(x.cols());
  Mat xhat(x.rows(), d);
  Eigen::VectorXd inv_std(x.rows());
  for (int r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  Mat v = (xhat.array().rowwise() * val(gain_row).row(0).array()).matrix()
              .rowwise() + val(bias_row).row(0);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v),
                 [this, a, gain_row, bias_row, xhat, inv_std, d, out] {
    const Mat& gy = nodes_[out.idx].grad;
    const Eigen::RowVectorXd g = nodes_[gain_row.idx].value.row(0);
    for (int r = 0; r < gy.rows(); ++r) {
      Eigen::RowVectorXd gxhat = gy.row(r).cwiseProduct(g);
      double m1 = gxhat.mean();
      double m2 = gxhat.dot(xhat.row(r)) / d;
      nodes_[a.idx].grad.row(r) +=
          inv_std(r) * (gxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
      nodes_[gain_row.idx].grad.row(0) += gy.row(r).cwiseProduct(xhat.row(r));
      nodes_[bias_row.idx].grad.row(0) += gy.row(r);
    }
  });
}

Var Tape::log_floored(Var a, double floor) {
  Mat v = val(a).cwiseMax(floor).array().log().matrix();
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, floor, out] {
    const Mat& x = nodes_[a.idx].value;
    Mat g = nodes_[out.idx].grad;
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c)
        g(r, c) = x(r, c) > floor ? g(r, c) / x(r, c) : 0.0;
    nodes_[a.idx].grad += g;
  });
}

Var Tape::pick(Var a, std::vector<std::pair<int, int>> coords) {
  Mat v(static_cast<int>(coords.size()), 1);
  for (int i = 0; i < v.rows(); ++i)
    v(i, 0) = val(a)(coords[i].first, coords[i].second);
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, cs = std::move(coords), out] {
    for (int i = 0; i < static_cast<int>(cs.size()); ++i)
      nodes_[a.idx].grad(cs[i].first, cs[i].second) +=
          nodes_[out.idx].grad(i, 0);
  });
}

Var Tape::sum(Var a) {
  Mat v(1, 1);
  v(0, 0) = val(a).sum();
  Var out{static_cast<int>(nodes_.size())};
  return emplace(std::move(v), [this, a, out] {
    nodes_[a.idx].grad.array() += nodes_[out.idx].grad(0, 0);
  });
}

void Tape::backward(Var loss) {
  if (val(loss).size() != 1)
    throw NumericError("backward: loss must be scalar");
  nodes_[loss.idx].grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back();
  }
}

}  // namespace dyploc::nn
