#pragma once

// Primal network simplex for the uncapacitated transportation problem on the
// complete bipartite graph sources x sinks. Integer supplies and demands keep
// the arithmetic exact; the spanning tree is kept strongly feasible so that
// degenerate pivots cannot cycle. Node u < m is a source, node m + j is sink j.
// A source's tree arc always points to its parent and a sink's tree arc always
// comes from its parent, so arc directions need not be stored.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eqq/errors.hpp"

namespace eqq::detail {

template <class Cost>
class NetworkSimplex {
 public:
  // Nodes must be given in the order the initial northwest-corner basis walks
  // them; all supplies and demands must be positive with equal sums.
  NetworkSimplex(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand, Cost cost)
      : m_(static_cast<int>(supply.size())), n_(static_cast<int>(demand.size())), cost_(std::move(cost)) {
    const int N = m_ + n_;
    parent_.assign(N, -1);
    flow_.assign(N, 0);
    pi_.assign(N, 0.0);
    thread_.assign(N, 0);
    rev_thread_.assign(N, 0);
    succ_num_.assign(N, 1);
    last_succ_.assign(N, 0);
    std::int64_t s_tot = 0, d_tot = 0;
    for (auto s : supply) {
      require(s > 0, ErrorCode::Internal, "nonpositive supply");
      s_tot += s;
    }
    for (auto d : demand) {
      require(d > 0, ErrorCode::Internal, "nonpositive demand");
      d_tot += d;
    }
    require(s_tot == d_tot, ErrorCode::Internal, "unbalanced transportation problem");
    northwest_corner(supply, demand);
    rebuild_thread();
    compute_potentials();
  }

  // Starts from a given strongly feasible spanning tree rooted at source 0:
  // parent[u] and the flow on the arc between u and parent[u].
  NetworkSimplex(int m, int n, Cost cost, std::vector<int> parent, std::vector<std::int64_t> flow)
      : m_(m), n_(n), cost_(std::move(cost)), parent_(std::move(parent)), flow_(std::move(flow)) {
    const int N = m_ + n_;
    pi_.assign(N, 0.0);
    thread_.assign(N, 0);
    rev_thread_.assign(N, 0);
    succ_num_.assign(N, 1);
    last_succ_.assign(N, 0);
    require(parent_[0] == -1, ErrorCode::Internal, "source 0 must be the root");
    rebuild_thread();
    compute_potentials();
  }

  int sources() const { return m_; }
  int parent(int u) const { return parent_[u]; }
  std::int64_t flow(int u) const { return flow_[u]; }
  int sinks() const { return n_; }
  Cost& cost() { return cost_; }
  const std::vector<double>& pi() const { return pi_; }

  double reduced_cost(int i, int j) const { return cost_(i, j) + pi_[i] - pi_[m_ + j]; }

  bool is_basic(int i, int j) const { return parent_[i] == m_ + j || parent_[m_ + j] == i; }

  // Potentials from the tree: pi[root] = 0, zero reduced cost on tree arcs.
  void compute_potentials() {
    const int root = 0;
    pi_[root] = 0.0;
    for (int u = thread_[root]; u != root; u = thread_[u]) {
      const int p = parent_[u];
      pi_[u] = u < m_ ? pi_[p] - cost_(u, p - m_) : pi_[p] + cost_(p, u - m_);
    }
  }

  // Pivots arc (i -> sink j) into the basis. The caller guarantees a negative
  // reduced cost.
  void pivot(int i, int j) {
    const int first = i, second = m_ + j;
    // join node
    int u = first, v = second;
    while (u != v) {
      if (succ_num_[u] < succ_num_[v]) u = parent_[u];
      else v = parent_[v];
    }
    const int join = u;

    // Leaving arc: blocking arcs are source tree arcs on the first path and
    // sink tree arcs on the second path; take the last one around the cycle.
    std::int64_t delta = INT64_MAX;
    int u_out = -1;
    bool on_first = true;
    for (int w = first; w != join; w = parent_[w]) {
      if (w < m_ && flow_[w] < delta) {
        delta = flow_[w];
        u_out = w;
      }
    }
    for (int w = second; w != join; w = parent_[w]) {
      if (w >= m_ && flow_[w] <= delta) {
        delta = flow_[w];
        u_out = w;
        on_first = false;
      }
    }
    require(u_out >= 0, ErrorCode::Internal, "unbounded pivot");

    if (delta > 0) {
      for (int w = first; w != join; w = parent_[w]) flow_[w] += (w < m_ ? -delta : delta);
      for (int w = second; w != join; w = parent_[w]) flow_[w] += (w < m_ ? delta : -delta);
    }

    const int u_in = on_first ? first : second;
    const int v_in = on_first ? second : first;
    update_tree(u_in, v_in, u_out, join, delta);

    const double c = cost_(i, j);
    const double sigma = u_in < m_ ? pi_[v_in] - c - pi_[u_in] : pi_[v_in] + c - pi_[u_in];
    const int end = thread_[last_succ_[u_in]];
    for (int w = u_in; w != end; w = thread_[w]) pi_[w] += sigma;
  }

  // Calls f(i, j, units) for every basic arc with positive flow.
  template <class F>
  void for_each_flow(F&& f) const {
    for (int u = 0; u < m_ + n_; ++u) {
      if (parent_[u] < 0 || flow_[u] == 0) continue;
      if (u < m_) f(u, parent_[u] - m_, flow_[u]);
      else f(parent_[u], u - m_, flow_[u]);
    }
  }

 private:
  void northwest_corner(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand) {
    int a = 0, b = 0;
    std::int64_t rs = supply[0], rd = demand[0];
    // source 0 is the root; sink 0 hangs below it
    parent_[m_] = 0;
    bool sink_is_new = true;
    while (true) {
      const std::int64_t f = std::min(rs, rd);
      if (sink_is_new) flow_[m_ + b] = f;
      else flow_[a] = f;
      rs -= f;
      rd -= f;
      if (rs == 0) {
        if (a + 1 == m_) break;
        ++a;
        rs = supply[a];
        parent_[a] = m_ + b;
        sink_is_new = false;
      } else {
        ++b;
        rd = demand[b];
        parent_[m_ + b] = a;
        sink_is_new = true;
      }
    }
    require(a == m_ - 1 && b == n_ - 1 && rs == 0 && rd == 0, ErrorCode::Internal, "northwest corner did not close");
  }

  void rebuild_thread() {
    const int N = m_ + n_;
    std::vector<int> head(N, -1), next(N, -1);
    for (int u = N - 1; u >= 0; --u) {
      if (parent_[u] < 0) continue;
      next[u] = head[parent_[u]];
      head[parent_[u]] = u;
    }
    // iterative preorder
    std::vector<int> order;
    order.reserve(N);
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      order.push_back(u);
      const std::size_t mark = stack.size();
      for (int c = head[u]; c >= 0; c = next[c]) stack.push_back(c);
      std::reverse(stack.begin() + static_cast<std::ptrdiff_t>(mark), stack.end());
    }
    require(static_cast<int>(order.size()) == N, ErrorCode::Internal, "basis is not a spanning tree");
    for (int k = 0; k < N; ++k) {
      thread_[order[k]] = order[(k + 1) % N];
      rev_thread_[order[(k + 1) % N]] = order[k];
      succ_num_[order[k]] = 1;
    }
    for (int k = N - 1; k >= 0; --k) {
      const int p = parent_[order[k]];
      if (p >= 0) succ_num_[p] += succ_num_[order[k]];
    }
    for (int k = 0; k < N; ++k) last_succ_[order[k]] = order[k + succ_num_[order[k]] - 1];
  }

  void update_tree(int u_in, int v_in, int u_out, int join, std::int64_t delta) {
    const int old_rev_thread = rev_thread_[u_out];
    const int old_succ_num = succ_num_[u_out];
    const int old_last_succ = last_succ_[u_out];
    const int v_out = parent_[u_out];

    if (u_in == u_out) {
      parent_[u_in] = v_in;
      flow_[u_in] = delta;
      if (thread_[v_in] != u_out) {
        int after = thread_[old_last_succ];
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
        after = thread_[v_in];
        thread_[v_in] = u_out;
        rev_thread_[u_out] = v_in;
        thread_[old_last_succ] = after;
        rev_thread_[after] = old_last_succ;
      }
    } else {
      const int thread_continue = old_rev_thread == v_in ? thread_[old_last_succ] : thread_[v_in];
      int stem = u_in;
      int par_stem = v_in;
      int last = last_succ_[u_in];
      int after = thread_[last];
      thread_[v_in] = u_in;
      dirty_revs_.clear();
      dirty_revs_.push_back(v_in);
      while (stem != u_out) {
        const int next_stem = parent_[stem];
        thread_[last] = next_stem;
        dirty_revs_.push_back(last);
        const int before = rev_thread_[stem];
        thread_[before] = after;
        rev_thread_[after] = before;
        parent_[stem] = par_stem;
        par_stem = stem;
        stem = next_stem;
        last = last_succ_[stem] == last_succ_[par_stem] ? rev_thread_[par_stem] : last_succ_[stem];
        after = thread_[last];
      }
      parent_[u_out] = par_stem;
      thread_[last] = thread_continue;
      rev_thread_[thread_continue] = last;
      last_succ_[u_out] = last;
      if (old_rev_thread != v_in) {
        thread_[old_rev_thread] = after;
        rev_thread_[after] = old_rev_thread;
      }
      for (int w : dirty_revs_) rev_thread_[thread_[w]] = w;

      int tmp_sc = 0;
      const int tmp_ls = last_succ_[u_out];
      for (int w = u_out, p = parent_[w]; w != u_in; w = p, p = parent_[w]) {
        flow_[w] = flow_[p];
        tmp_sc += succ_num_[w] - succ_num_[p];
        succ_num_[w] = tmp_sc;
        last_succ_[p] = tmp_ls;
      }
      flow_[u_in] = delta;
      succ_num_[u_in] = old_succ_num;
    }

    const int up_limit_out = last_succ_[join] == v_in ? join : -1;
    const int last_succ_out = last_succ_[u_out];
    for (int w = v_in; w != -1 && last_succ_[w] == v_in; w = parent_[w]) last_succ_[w] = last_succ_out;

    if (join != old_rev_thread && v_in != old_rev_thread) {
      for (int w = v_out; w != up_limit_out && last_succ_[w] == old_last_succ; w = parent_[w])
        last_succ_[w] = old_rev_thread;
    } else if (last_succ_out != old_last_succ) {
      for (int w = v_out; w != up_limit_out && last_succ_[w] == old_last_succ; w = parent_[w])
        last_succ_[w] = last_succ_out;
    }

    for (int w = v_in; w != join; w = parent_[w]) succ_num_[w] += old_succ_num;
    for (int w = v_out; w != join; w = parent_[w]) succ_num_[w] -= old_succ_num;
  }

  int m_, n_;
  Cost cost_;
  std::vector<int> parent_;
  std::vector<std::int64_t> flow_;  // on the arc between u and parent_[u]
  std::vector<double> pi_;
  std::vector<int> thread_, rev_thread_, succ_num_, last_succ_;
  std::vector<int> dirty_revs_;
};

}  // namespace eqq::detail
