#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace ascpipe {

struct TreeHyperparams {
  int min_split = 5;
  int min_bucket = 4;
  int max_depth = 6;
  double cp = 0.001;
};

struct TreeNode {
  int id = 0;
  int parent = -1;         // -1 at root
  int split_var = -1;      // -1 on leaves
  double threshold = 0.0;  // value < threshold goes left, >= goes right
  int left = -1;
  int right = -1;
  double mean = 0.0;
  int count = 0;
  double sse = 0.0;
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<std::string> variable_names;
  TreeHyperparams params;

  bool is_leaf(int id) const { return nodes[id].split_var < 0; }
};

// Greedy recursive binary partitioning on the SSE (ANOVA) criterion.
// Thresholds are midpoints between consecutive sorted distinct values; a split
// is retained only if it reduces SSE by at least cp * root SSE.
TreeModel tree_fit(const Eigen::VectorXd& targets, const Eigen::MatrixXd& covariates,
                   const std::vector<std::string>& variable_names, const TreeHyperparams& params);

double tree_predict(const TreeModel& model, const Eigen::VectorXd& x);

// Mean of per-year effects over the requested years (keys are years).
double effect_summary(const std::map<int, double>& effects, const std::vector<int>& years);

}  // namespace ascpipe
