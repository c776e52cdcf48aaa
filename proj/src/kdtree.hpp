#pragma once

// Static kd-tree over a small point set, queried with additively weighted
// costs  c(x, y_j) - w_j  where c = ||x - y_j||^p.

#include <span>
#include <utility>
#include <vector>

namespace eqq::detail {

class KdTree {
 public:
  KdTree() = default;
  KdTree(std::span<const double> coords, int d, double p);

  // Recomputes per-node maximum weights. An empty span means all weights zero.
  void set_weights(std::span<const double> w);

  // Index minimising c(x, y_j) - w_j, lowest index on ties; value in *best.
  int argmin(const double* x, double* best) const;

  // The k smallest (value, index) pairs in increasing order.
  void k_best(const double* x, int k, std::vector<std::pair<double, int>>& out) const;

  int size() const { return n_; }

 private:
  struct Node {
    int begin, end;  // range in order_
    int left = -1, right = -1;
  };

  int build(int begin, int end, int depth);
  double lower_bound(const double* x, int node) const;
  double weight(int j) const { return w_.empty() ? 0.0 : w_[j]; }
  double value(const double* x, int j) const;
  void refresh_max(int node);

  int d_ = 0;
  int n_ = 0;
  double p_ = 2.0;
  std::vector<double> pts_;  // reordered copy, row per tree slot
  std::vector<int> order_;   // tree slot -> original index
  std::vector<Node> nodes_;
  std::vector<double> lo_, hi_;  // node bounding boxes
  std::vector<double> max_w_;
  std::vector<double> w_;  // by original index
};

}  // namespace eqq::detail
