#include "kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "eqq/geometry.hpp"

namespace eqq::detail {

namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(std::span<const double> coords, int d, double p)
    : d_(d), n_(static_cast<int>(coords.size() / d)), p_(p), order_(n_) {
  std::iota(order_.begin(), order_.end(), 0);
  std::vector<double> tmp(coords.begin(), coords.end());
  pts_ = std::move(tmp);
  nodes_.reserve(2 * (n_ / kLeafSize + 1));
  if (n_ > 0) build(0, n_, 0);
  std::vector<double> reordered(static_cast<std::size_t>(n_) * d_);
  for (int s = 0; s < n_; ++s)
    std::copy_n(&coords[static_cast<std::size_t>(order_[s]) * d_], d_, &reordered[static_cast<std::size_t>(s) * d_]);
  pts_ = std::move(reordered);
  lo_.assign(nodes_.size() * d_, 0.0);
  hi_.assign(nodes_.size() * d_, 0.0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (int k = 0; k < d_; ++k) {
      double a = std::numeric_limits<double>::infinity(), b = -a;
      for (int s = nodes_[i].begin; s < nodes_[i].end; ++s) {
        a = std::min(a, pts_[static_cast<std::size_t>(s) * d_ + k]);
        b = std::max(b, pts_[static_cast<std::size_t>(s) * d_ + k]);
      }
      lo_[i * d_ + k] = a;
      hi_[i * d_ + k] = b;
    }
  }
  max_w_.assign(nodes_.size(), 0.0);
}

int KdTree::build(int begin, int end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  int axis = 0;
  double spread = -1.0;
  for (int k = 0; k < d_; ++k) {
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (int s = begin; s < end; ++s) {
      const double v = pts_[static_cast<std::size_t>(order_[s]) * d_ + k];
      a = std::min(a, v);
      b = std::max(b, v);
    }
    if (b - a > spread) {
      spread = b - a;
      axis = k;
    }
  }
  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double va = pts_[static_cast<std::size_t>(a) * d_ + axis];
    const double vb = pts_[static_cast<std::size_t>(b) * d_ + axis];
    return va < vb || (va == vb && a < b);
  });
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

void KdTree::set_weights(std::span<const double> w) {
  w_.assign(w.begin(), w.end());
  if (!nodes_.empty()) refresh_max(0);
}

void KdTree::refresh_max(int node) {
  const Node& nd = nodes_[node];
  if (nd.left < 0) {
    double m = -std::numeric_limits<double>::infinity();
    for (int s = nd.begin; s < nd.end; ++s) m = std::max(m, weight(order_[s]));
    max_w_[node] = m;
    return;
  }
  refresh_max(nd.left);
  refresh_max(nd.right);
  max_w_[node] = std::max(max_w_[nd.left], max_w_[nd.right]);
}

double KdTree::lower_bound(const double* x, int node) const {
  double sq = 0.0;
  const double* lo = &lo_[static_cast<std::size_t>(node) * d_];
  const double* hi = &hi_[static_cast<std::size_t>(node) * d_];
  for (int k = 0; k < d_; ++k) {
    double t = 0.0;
    if (x[k] < lo[k]) t = lo[k] - x[k];
    else if (x[k] > hi[k]) t = x[k] - hi[k];
    sq += t * t;
  }
  return pow_from_sq(sq, p_) - max_w_[node];
}

double KdTree::value(const double* x, int slot) const {
  return pow_from_sq(sq_dist(x, &pts_[static_cast<std::size_t>(slot) * d_], d_), p_) - weight(order_[slot]);
}

int KdTree::argmin(const double* x, double* best_out) const {
  double best = std::numeric_limits<double>::infinity();
  int arg = -1;
  int stack[128];
  int top = 0;
  if (n_ > 0) stack[top++] = 0;
  while (top > 0) {
    const int node = stack[--top];
    if (lower_bound(x, node) > best) continue;
    const Node& nd = nodes_[node];
    if (nd.left < 0) {
      for (int s = nd.begin; s < nd.end; ++s) {
        const double v = value(x, s);
        if (v < best || (v == best && order_[s] < arg)) {
          best = v;
          arg = order_[s];
        }
      }
      continue;
    }
    const double bl = lower_bound(x, nd.left), br = lower_bound(x, nd.right);
    if (bl <= br) {
      stack[top++] = nd.right;
      stack[top++] = nd.left;
    } else {
      stack[top++] = nd.left;
      stack[top++] = nd.right;
    }
  }
  if (best_out) *best_out = best;
  return arg;
}

void KdTree::k_best(const double* x, int k, std::vector<std::pair<double, int>>& out) const {
  out.clear();
  k = std::min(k, n_);
  if (k <= 0) return;
  // max-heap on (value, index)
  auto worse = [](const std::pair<double, int>& a, const std::pair<double, int>& b) { return a < b; };
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const int node = stack[--top];
    if (static_cast<int>(out.size()) == k && lower_bound(x, node) > out.front().first) continue;
    const Node& nd = nodes_[node];
    if (nd.left < 0) {
      for (int s = nd.begin; s < nd.end; ++s) {
        const std::pair<double, int> cand{value(x, s), order_[s]};
        if (static_cast<int>(out.size()) < k) {
          out.push_back(cand);
          std::push_heap(out.begin(), out.end(), worse);
        } else if (cand < out.front()) {
          std::pop_heap(out.begin(), out.end(), worse);
          out.back() = cand;
          std::push_heap(out.begin(), out.end(), worse);
        }
      }
      continue;
    }
    const double bl = lower_bound(x, nd.left), br = lower_bound(x, nd.right);
    if (bl <= br) {
      stack[top++] = nd.right;
      stack[top++] = nd.left;
    } else {
      stack[top++] = nd.left;
      stack[top++] = nd.right;
    }
  }
  std::sort_heap(out.begin(), out.end(), worse);
}

}  // namespace eqq::detail
