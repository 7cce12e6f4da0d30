#include "ascpipe/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ascpipe {

namespace {

double node_sse(const Eigen::VectorXd& y, const std::vector<int>& idx) {
  double mean = 0.0;
  for (int i : idx) mean += y[i];
  mean /= static_cast<double>(idx.size());
  double sse = 0.0;
  for (int i : idx) sse += (y[i] - mean) * (y[i] - mean);
  return sse;
}

struct SplitCandidate {
  bool found = false;
  int var = -1;
  double threshold = 0.0;
  double sse_left = 0.0;
  double sse_right = 0.0;
  double reduction = -1.0;
};

SplitCandidate best_split(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                          const std::vector<int>& idx, int min_bucket, double parent_sse) {
  SplitCandidate best;
  const int n = static_cast<int>(idx.size());
  for (int v = 0; v < x.cols(); ++v) {
    std::vector<int> order = idx;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (x(a, v) != x(b, v)) return x(a, v) < x(b, v);
      return a < b;
    });
    // Prefix sums over the sorted order.
    std::vector<double> ps(n + 1, 0.0), pss(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      ps[i + 1] = ps[i] + y[order[i]];
      pss[i + 1] = pss[i] + y[order[i]] * y[order[i]];
    }
    for (int i = min_bucket; i <= n - min_bucket; ++i) {
      const double lo = x(order[i - 1], v);
      const double hi = x(order[i], v);
      if (lo == hi) continue;  // threshold only between distinct values
      const double thr = 0.5 * (lo + hi);
      const double nl = i, nr = n - i;
      const double sl = pss[i] - ps[i] * ps[i] / nl;
      const double sr = (pss[n] - pss[i]) - (ps[n] - ps[i]) * (ps[n] - ps[i]) / nr;
      const double red = parent_sse - (sl + sr);
      // Ties keep the first candidate in (variable index, threshold) order.
      if (!best.found || red > best.reduction) {
        best = {true, v, thr, std::max(sl, 0.0), std::max(sr, 0.0), red};
      }
    }
  }
  return best;
}

}  // namespace

TreeModel tree_fit(const Eigen::VectorXd& targets, const Eigen::MatrixXd& covariates,
                   const std::vector<std::string>& variable_names, const TreeHyperparams& params) {
  const int n = static_cast<int>(targets.size());
  if (covariates.rows() != n) throw std::runtime_error("tree_fit: row count mismatch");
  if (static_cast<int>(variable_names.size()) != covariates.cols()) {
    throw std::runtime_error("tree_fit: variable name count mismatch");
  }
  if (n < params.min_split) {
    throw std::runtime_error("tree_fit: fewer units than min_split");
  }
  if (!targets.allFinite() || !covariates.allFinite()) {
    throw std::runtime_error("tree_fit: non-finite input");
  }

  TreeModel model;
  model.variable_names = variable_names;
  model.params = params;

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  const double root_sse = node_sse(targets, all);

  struct Work {
    std::vector<int> idx;
    int node_id;
    int depth;
  };

  auto make_node = [&](const std::vector<int>& idx, int parent) {
    TreeNode node;
    node.id = static_cast<int>(model.nodes.size());
    node.parent = parent;
    node.count = static_cast<int>(idx.size());
    double mean = 0.0;
    for (int i : idx) mean += targets[i];
    node.mean = mean / node.count;
    node.sse = node_sse(targets, idx);
    model.nodes.push_back(node);
    return node.id;
  };

  std::vector<Work> stack;
  stack.push_back({all, make_node(all, -1), 0});

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    TreeNode& node = model.nodes[w.node_id];
    if (node.count < params.min_split || w.depth >= params.max_depth || node.sse <= 0.0) {
      continue;
    }
    SplitCandidate cand =
        best_split(targets, covariates, w.idx, params.min_bucket, node.sse);
    if (!cand.found || cand.reduction < params.cp * root_sse) continue;

    std::vector<int> left_idx, right_idx;
    for (int i : w.idx) {
      if (covariates(i, cand.var) < cand.threshold) {
        left_idx.push_back(i);
      } else {
        right_idx.push_back(i);
      }
    }
    node.split_var = cand.var;
    node.threshold = cand.threshold;
    const int left_id = make_node(left_idx, w.node_id);
    const int right_id = make_node(right_idx, w.node_id);
    model.nodes[w.node_id].left = left_id;
    model.nodes[w.node_id].right = right_id;
    // Right pushed first so the left child is processed (and numbered) depth-first.
    stack.push_back({std::move(right_idx), right_id, w.depth + 1});
    stack.push_back({std::move(left_idx), left_id, w.depth + 1});
  }
  return model;
}

double tree_predict(const TreeModel& model, const Eigen::VectorXd& x) {
  if (x.size() != static_cast<Eigen::Index>(model.variable_names.size())) {
    throw std::runtime_error("tree_predict: covariate record has wrong length");
  }
  if (!x.allFinite()) throw std::runtime_error("tree_predict: missing split variable value");
  int id = 0;
  while (!model.is_leaf(id)) {
    const TreeNode& node = model.nodes[id];
    // Boundary values (value == threshold) go right.
    id = (x[node.split_var] < node.threshold) ? node.left : node.right;
  }
  return model.nodes[id].mean;
}

double effect_summary(const std::map<int, double>& effects, const std::vector<int>& years) {
  if (years.empty()) throw std::runtime_error("effect_summary: empty year set");
  double sum = 0.0;
  for (int y : years) {
    auto it = effects.find(y);
    if (it == effects.end()) {
      throw std::runtime_error("effect_summary: year " + std::to_string(y) + " missing");
    }
    sum += it->second;
  }
  return sum / static_cast<double>(years.size());
}

}  // namespace ascpipe
