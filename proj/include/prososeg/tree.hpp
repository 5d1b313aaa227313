#pragma once

// CART-style probabilistic classifier: entropy splits, fractional routing of
// missing values (test samples follow the training split proportions and the
// resulting leaf posteriors are averaged), cost-complexity pruning against
// held-out entropy reduction.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "prososeg/common.hpp"
#include "prososeg/features.hpp"

namespace prososeg {

struct TreeTrainParams {
  double min_leaf_count = 50;   // weighted samples per child
  int max_depth = 20;
  int cv_folds = 4;
  double smoothing = 0.5;       // Laplace constant per class at leaves
};

struct DecisionTree {
  struct Node {
    bool leaf = true;
    // split
    std::string feature;
    bool categorical = false;
    double threshold = 0;
    std::vector<std::string> left_categories;
    double missing_left = 0.5;
    int left = -1, right = -1;
    // distribution
    double count = 0;                    // weighted training count
    std::vector<double> class_weights;   // weighted counts per class (training-side)
    std::vector<double> posterior;       // smoothed
  };

  std::vector<std::string> classes;
  std::vector<Node> nodes;   // nodes[0] is the root
  double smoothing = 0.5;

  int class_id(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& nd : nodes) n += nd.leaf ? 1 : 0;
    return n;
  }
};

// Binds tree feature names / category names to a concrete table schema so
// bulk prediction avoids string lookups.
struct TreeBinding {
  struct NodeBind {
    int field = -1;                 // -1: feature absent, treat as missing
    std::vector<char> left_code;    // categorical: data category code -> goes left
  };
  std::vector<NodeBind> per_node;
};

inline TreeBinding bind_tree(const DecisionTree& tree, const FeatureSchema& schema) {
  TreeBinding b;
  b.per_node.resize(tree.nodes.size());
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& nd = tree.nodes[i];
    if (nd.leaf) continue;
    auto& nb = b.per_node[i];
    nb.field = schema.find(nd.feature);
    if (nb.field >= 0 && nd.categorical) {
      const auto& cats = schema.fields[static_cast<std::size_t>(nb.field)].categories;
      nb.left_code.assign(cats.size(), 0);
      std::set<std::string> left(nd.left_categories.begin(), nd.left_categories.end());
      for (std::size_t c = 0; c < cats.size(); ++c)
        if (left.count(cats[c])) nb.left_code[c] = 1;
    }
  }
  return b;
}

namespace detail {

inline double entropy_bits(const std::vector<double>& w) {
  double tot = 0;
  for (double x : w) tot += x;
  if (tot <= 0) return 0;
  double h = 0;
  for (double x : w)
    if (x > 0) h -= (x / tot) * std::log2(x / tot);
  return h;
}

inline void predict_walk(const DecisionTree& tree, const TreeBinding& bind,
                         const std::vector<double>& row, int node, double weight,
                         std::vector<double>& acc) {
  const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
  if (nd.leaf) {
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += weight * nd.posterior[c];
    return;
  }
  const auto& nb = bind.per_node[static_cast<std::size_t>(node)];
  double v = nb.field >= 0 ? row[static_cast<std::size_t>(nb.field)] : missing_value();
  bool go_missing = is_missing(v);
  if (!go_missing && nd.categorical) {
    auto code = static_cast<std::size_t>(v);
    if (code >= nb.left_code.size()) {
      go_missing = true;   // category unseen in training
    } else {
      predict_walk(tree, bind, row, nb.left_code[code] ? nd.left : nd.right, weight, acc);
      return;
    }
  }
  if (go_missing) {
    if (nd.missing_left > 0) predict_walk(tree, bind, row, nd.left, weight * nd.missing_left, acc);
    if (nd.missing_left < 1) predict_walk(tree, bind, row, nd.right, weight * (1 - nd.missing_left), acc);
    return;
  }
  predict_walk(tree, bind, row, v <= nd.threshold ? nd.left : nd.right, weight, acc);
}

}  // namespace detail

inline std::vector<double> predict(const DecisionTree& tree, const TreeBinding& bind,
                                   const std::vector<double>& row) {
  std::vector<double> acc(tree.classes.size(), 0.0);
  detail::predict_walk(tree, bind, row, 0, 1.0, acc);
  return acc;
}

inline std::vector<double> predict(const DecisionTree& tree, const FeatureTable& table, std::size_t r) {
  TreeBinding b = bind_tree(tree, table.schema);
  return predict(tree, b, table.rows[r]);
}

namespace detail {

struct SplitChoice {
  bool found = false;
  double gain = -1;
  int field = -1;
  std::string feature;
  bool categorical = false;
  double threshold = 0;
  std::vector<int> left_codes;
};

inline bool better_split(const SplitChoice& a, const SplitChoice& b) {
  // true if a beats b: larger gain, then lexicographically smaller feature
  // name, then smaller threshold / smaller left subset.
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.feature != b.feature) return a.feature < b.feature;
  if (a.categorical != b.categorical) return !a.categorical;
  if (!a.categorical) return a.threshold < b.threshold;
  return a.left_codes < b.left_codes;
}

}  // namespace detail

inline DecisionTree train_tree(const FeatureTable& table, const std::vector<int>& labels,
                               const std::vector<std::string>& classes, const TreeTrainParams& params,
                               const std::vector<std::size_t>* row_subset = nullptr,
                               const std::vector<int>* allowed_fields = nullptr) {
  if (labels.size() != table.size()) throw std::runtime_error("train_tree: label count mismatch");
  std::vector<std::size_t> all_rows;
  if (!row_subset) {
    all_rows.resize(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) all_rows[i] = i;
    row_subset = &all_rows;
  }
  if (row_subset->empty()) throw std::runtime_error("train_tree: empty training set");
  const std::size_t n_classes = classes.size();
  const auto& schema = table.schema;
  std::vector<int> fields;
  if (allowed_fields) {
    fields = *allowed_fields;
  } else {
    for (std::size_t f = 0; f < schema.fields.size(); ++f) fields.push_back(static_cast<int>(f));
  }

  DecisionTree tree;
  tree.classes = classes;
  tree.smoothing = params.smoothing;

  struct WorkItem {
    std::vector<std::pair<std::size_t, double>> rows;   // (row, weight)
    int node;
    int depth;
  };

  auto make_node = [&](const std::vector<std::pair<std::size_t, double>>& rows) {
    DecisionTree::Node nd;
    nd.class_weights.assign(n_classes, 0.0);
    for (auto [r, w] : rows) {
      nd.class_weights[static_cast<std::size_t>(labels[r])] += w;
      nd.count += w;
    }
    double denom = nd.count + params.smoothing * static_cast<double>(n_classes);
    nd.posterior.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c)
      nd.posterior[c] = denom > 0 ? (nd.class_weights[c] + params.smoothing) / denom
                                  : 1.0 / static_cast<double>(n_classes);
    return nd;
  };

  std::vector<WorkItem> stack;
  {
    WorkItem root;
    for (std::size_t r : *row_subset) root.rows.emplace_back(r, 1.0);
    root.node = 0;
    root.depth = 0;
    tree.nodes.push_back(make_node(root.rows));
    stack.push_back(std::move(root));
  }

  while (!stack.empty()) {
    WorkItem item = std::move(stack.back());
    stack.pop_back();
    DecisionTree::Node& node = tree.nodes[static_cast<std::size_t>(item.node)];
    const double total_w = node.count;
    int present = 0;
    for (double w : node.class_weights)
      if (w > 0) ++present;
    if (present <= 1 || item.depth >= params.max_depth) continue;

    detail::SplitChoice best;
    for (int f : fields) {
      const auto& field = schema.fields[static_cast<std::size_t>(f)];
      double w_known = 0;
      std::vector<double> known_class(n_classes, 0.0);
      if (field.kind == FeatureKind::kContinuous) {
        std::vector<std::pair<double, std::pair<int, double>>> vals;   // value -> (class, weight)
        for (auto [r, w] : item.rows) {
          double v = table.rows[r][static_cast<std::size_t>(f)];
          if (is_missing(v)) continue;
          vals.push_back({v, {labels[r], w}});
          known_class[static_cast<std::size_t>(labels[r])] += w;
          w_known += w;
        }
        if (vals.size() < 2 || w_known <= 0) continue;
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double h_known = detail::entropy_bits(known_class);
        std::vector<double> left_class(n_classes, 0.0);
        double w_left = 0;
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
          left_class[static_cast<std::size_t>(vals[i].second.first)] += vals[i].second.second;
          w_left += vals[i].second.second;
          if (vals[i].first == vals[i + 1].first) continue;
          double w_right = w_known - w_left;
          double frac = w_left / w_known;
          double child_l = w_left + frac * (total_w - w_known);
          double child_r = w_right + (1 - frac) * (total_w - w_known);
          if (child_l < params.min_leaf_count || child_r < params.min_leaf_count) continue;
          std::vector<double> right_class(n_classes);
          for (std::size_t c = 0; c < n_classes; ++c) right_class[c] = known_class[c] - left_class[c];
          double h = (w_left * detail::entropy_bits(left_class) +
                      w_right * detail::entropy_bits(right_class)) / w_known;
          double gain = (h_known - h) * (w_known / total_w);
          detail::SplitChoice cand;
          cand.found = true;
          cand.gain = gain;
          cand.field = f;
          cand.feature = field.name;
          cand.categorical = false;
          cand.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
          if (gain > 1e-12 && (!best.found || detail::better_split(cand, best))) best = std::move(cand);
        }
      } else {
        std::size_t n_cats = field.categories.size();
        if (n_cats < 2) continue;
        std::vector<std::vector<double>> cat_class(n_cats, std::vector<double>(n_classes, 0.0));
        std::vector<double> cat_w(n_cats, 0.0);
        for (auto [r, w] : item.rows) {
          double v = table.rows[r][static_cast<std::size_t>(f)];
          if (is_missing(v)) continue;
          auto code = static_cast<std::size_t>(v);
          cat_class[code][static_cast<std::size_t>(labels[r])] += w;
          cat_w[code] += w;
          known_class[static_cast<std::size_t>(labels[r])] += w;
          w_known += w;
        }
        if (w_known <= 0) continue;
        // Order categories by first-class proportion, then scan prefix splits.
        std::vector<std::size_t> order;
        for (std::size_t c = 0; c < n_cats; ++c)
          if (cat_w[c] > 0) order.push_back(c);
        if (order.size() < 2) continue;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          double pa = cat_class[a][0] / cat_w[a];
          double pb = cat_class[b][0] / cat_w[b];
          if (pa != pb) return pa < pb;
          return a < b;
        });
        double h_known = detail::entropy_bits(known_class);
        std::vector<double> left_class(n_classes, 0.0);
        double w_left = 0;
        std::vector<int> left_codes;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          for (std::size_t c = 0; c < n_classes; ++c) left_class[c] += cat_class[order[i]][c];
          w_left += cat_w[order[i]];
          left_codes.push_back(static_cast<int>(order[i]));
          double w_right = w_known - w_left;
          double frac = w_left / w_known;
          double child_l = w_left + frac * (total_w - w_known);
          double child_r = w_right + (1 - frac) * (total_w - w_known);
          if (child_l < params.min_leaf_count || child_r < params.min_leaf_count) continue;
          std::vector<double> right_class(n_classes);
          for (std::size_t c = 0; c < n_classes; ++c) right_class[c] = known_class[c] - left_class[c];
          double h = (w_left * detail::entropy_bits(left_class) +
                      w_right * detail::entropy_bits(right_class)) / w_known;
          double gain = (h_known - h) * (w_known / total_w);
          detail::SplitChoice cand;
          cand.found = true;
          cand.gain = gain;
          cand.field = f;
          cand.feature = field.name;
          cand.categorical = true;
          std::vector<int> codes = left_codes;
          std::sort(codes.begin(), codes.end());
          cand.left_codes = std::move(codes);
          if (gain > 1e-12 && (!best.found || detail::better_split(cand, best))) best = std::move(cand);
        }
      }
    }
    if (!best.found) continue;

    // Route rows: known values by the split, missing fractionally.
    std::vector<std::pair<std::size_t, double>> left_rows, right_rows;
    double w_known_l = 0, w_known = 0;
    const auto& field = schema.fields[static_cast<std::size_t>(best.field)];
    std::vector<char> left_code;
    if (best.categorical) {
      left_code.assign(field.categories.size(), 0);
      for (int c : best.left_codes) left_code[static_cast<std::size_t>(c)] = 1;
    }
    for (auto [r, w] : item.rows) {
      double v = table.rows[r][static_cast<std::size_t>(best.field)];
      if (is_missing(v)) continue;
      bool go_left = best.categorical ? left_code[static_cast<std::size_t>(v)] != 0 : v <= best.threshold;
      w_known += w;
      if (go_left) w_known_l += w;
    }
    double frac = w_known > 0 ? w_known_l / w_known : 0.5;
    for (auto [r, w] : item.rows) {
      double v = table.rows[r][static_cast<std::size_t>(best.field)];
      if (is_missing(v)) {
        if (frac > 0) left_rows.emplace_back(r, w * frac);
        if (frac < 1) right_rows.emplace_back(r, w * (1 - frac));
        continue;
      }
      bool go_left = best.categorical ? left_code[static_cast<std::size_t>(v)] != 0 : v <= best.threshold;
      (go_left ? left_rows : right_rows).emplace_back(r, w);
    }

    node.leaf = false;
    node.feature = best.feature;
    node.categorical = best.categorical;
    node.threshold = best.threshold;
    node.missing_left = frac;
    if (best.categorical)
      for (int c : best.left_codes)
        node.left_categories.push_back(field.categories[static_cast<std::size_t>(c)]);

    int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(make_node(left_rows));
    int right_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(make_node(right_rows));
    tree.nodes[static_cast<std::size_t>(item.node)].left = left_id;
    tree.nodes[static_cast<std::size_t>(item.node)].right = right_id;

    WorkItem li{std::move(left_rows), left_id, item.depth + 1};
    WorkItem ri{std::move(right_rows), right_id, item.depth + 1};
    stack.push_back(std::move(li));
    stack.push_back(std::move(ri));
  }
  return tree;
}

inline DecisionTree train_tree(const FeatureTable& table, const TreeTrainParams& params,
                               const std::vector<std::size_t>* row_subset = nullptr,
                               const std::vector<int>* allowed_fields = nullptr) {
  std::set<std::string> names(table.label.begin(), table.label.end());
  std::vector<std::string> classes(names.begin(), names.end());
  std::vector<int> labels(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto it = names.find(table.label[i]);
    labels[i] = static_cast<int>(std::distance(names.begin(), it));
  }
  return train_tree(table, labels, classes, params, row_subset, allowed_fields);
}

// Test-set entropy reduction in bits/sample: H(test prior) minus the mean
// negated log2 posterior of the true class.
inline double entropy_reduction(const DecisionTree& tree, const FeatureTable& table,
                                const std::vector<int>& labels,
                                const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw std::runtime_error("entropy_reduction: empty test set");
  TreeBinding bind = bind_tree(tree, table.schema);
  std::vector<double> prior(tree.classes.size(), 0.0);
  double nll = 0;
  for (std::size_t r : rows) {
    prior[static_cast<std::size_t>(labels[r])] += 1;
    auto p = predict(tree, bind, table.rows[r]);
    double q = std::max(p[static_cast<std::size_t>(labels[r])], 1e-9);
    nll -= std::log2(q);
  }
  return detail::entropy_bits(prior) - nll / static_cast<double>(rows.size());
}

inline double entropy_reduction(const DecisionTree& tree, const FeatureTable& table,
                                const std::vector<int>& labels) {
  std::vector<std::size_t> rows(table.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return entropy_reduction(tree, table, labels, rows);
}

// Fraction of (weighted) per-sample feature queries attributable to each
// feature,路normalized to sum to 1.
inline std::map<std::string, double> feature_usage(const DecisionTree& tree, const FeatureTable& table,
                                                   const std::vector<std::size_t>* rows = nullptr) {
  std::map<std::string, double> usage;
  TreeBinding bind = bind_tree(tree, table.schema);
  std::vector<std::size_t> all;
  if (!rows) {
    all.resize(table.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = &all;
  }
  double total = 0;

  struct Frame { int node; double weight; };
  for (std::size_t r : *rows) {
    std::vector<Frame> stack{{0, 1.0}};
    while (!stack.empty()) {
      Frame fr = stack.back();
      stack.pop_back();
      const auto& nd = tree.nodes[static_cast<std::size_t>(fr.node)];
      if (nd.leaf) continue;
      usage[nd.feature] += fr.weight;
      total += fr.weight;
      const auto& nb = bind.per_node[static_cast<std::size_t>(fr.node)];
      double v = nb.field >= 0 ? table.rows[r][static_cast<std::size_t>(nb.field)] : missing_value();
      bool go_missing = is_missing(v);
      if (!go_missing && nd.categorical) {
        auto code = static_cast<std::size_t>(v);
        if (code >= nb.left_code.size()) go_missing = true;
        else stack.push_back({nb.left_code[code] ? nd.left : nd.right, fr.weight});
      } else if (!go_missing) {
        stack.push_back({v <= nd.threshold ? nd.left : nd.right, fr.weight});
      }
      if (go_missing) {
        if (nd.missing_left > 0) stack.push_back({nd.left, fr.weight * nd.missing_left});
        if (nd.missing_left < 1) stack.push_back({nd.right, fr.weight * (1 - nd.missing_left)});
      }
    }
  }
  if (total > 0)
    for (auto& [k, v] : usage) v /= total;
  return usage;
}

// Random subsample of each class down to the smallest class count.
inline std::vector<std::size_t> downsample(const std::vector<int>& labels, std::size_t n_classes,
                                           std::uint64_t seed,
                                           const std::vector<std::size_t>* row_subset = nullptr) {
  std::vector<std::vector<std::size_t>> per_class(n_classes);
  if (row_subset) {
    for (std::size_t r : *row_subset) per_class[static_cast<std::size_t>(labels[r])].push_back(r);
  } else {
    for (std::size_t r = 0; r < labels.size(); ++r)
      per_class[static_cast<std::size_t>(labels[r])].push_back(r);
  }
  std::size_t min_count = std::numeric_limits<std::size_t>::max();
  for (const auto& v : per_class) {
    if (v.empty()) throw std::runtime_error("downsample: a class is absent");
    min_count = std::min(min_count, v.size());
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (auto& v : per_class) {
    std::shuffle(v.begin(), v.end(), rng);
    keep.insert(keep.end(), v.begin(), v.begin() + static_cast<long>(min_count));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

// --------------------------------------------------------------------------
// Cost-complexity pruning against held-out entropy reduction.

namespace detail {

inline void subtree_stats(const DecisionTree& tree, int node, double& risk, std::size_t& leaves) {
  const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
  if (nd.leaf) {
    risk += nd.count * entropy_bits(nd.class_weights);
    leaves += 1;
    return;
  }
  subtree_stats(tree, nd.left, risk, leaves);
  subtree_stats(tree, nd.right, risk, leaves);
}

inline void collapse_node(DecisionTree& tree, int node) {
  auto& nd = tree.nodes[static_cast<std::size_t>(node)];
  nd.leaf = true;
  nd.left = nd.right = -1;
  nd.feature.clear();
  nd.left_categories.clear();
}

}  // namespace detail

// Generates the weakest-link pruning sequence and returns the subtree with
// the largest held-out entropy reduction; ties go to the smaller subtree.
inline DecisionTree prune_cv(const DecisionTree& tree, const FeatureTable& heldout,
                             const std::vector<int>& heldout_labels) {
  if (heldout.size() == 0) throw std::runtime_error("prune_cv: empty held-out set");
  DecisionTree current = tree;
  DecisionTree best = tree;
  double best_score = entropy_reduction(tree, heldout, heldout_labels);
  std::size_t best_leaves = tree.leaf_count();

  while (true) {
    // Weakest link over the current tree.
    int weakest = -1;
    double weakest_g = 0;
    for (std::size_t i = 0; i < current.nodes.size(); ++i) {
      const auto& nd = current.nodes[i];
      if (nd.leaf) continue;
      double risk_sub = 0;
      std::size_t leaves = 0;
      detail::subtree_stats(current, static_cast<int>(i), risk_sub, leaves);
      double risk_here = nd.count * detail::entropy_bits(nd.class_weights);
      double g = (risk_here - risk_sub) / static_cast<double>(leaves - 1);
      if (weakest < 0 || g < weakest_g || (g == weakest_g && static_cast<int>(i) > weakest)) {
        weakest = static_cast<int>(i);
        weakest_g = g;
      }
    }
    if (weakest < 0) break;   // already a single leaf
    detail::collapse_node(current, weakest);
    double score = entropy_reduction(current, heldout, heldout_labels);
    std::size_t leaves = current.leaf_count();
    if (score > best_score || (score == best_score && leaves < best_leaves)) {
      best = current;
      best_score = score;
      best_leaves = leaves;
    }
  }
  return best;
}

// --------------------------------------------------------------------------
// Serialization: indented preorder, one node per line, exact round-trip.

namespace detail {

inline void write_node(std::ostream& out, const DecisionTree& tree, int node, int depth) {
  const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
  for (int i = 0; i < depth; ++i) out << "  ";
  if (nd.leaf) {
    out << "leaf " << format_double(nd.count);
    for (double p : nd.posterior) out << ' ' << format_double(p);
    out << '\n';
    return;
  }
  if (nd.categorical) {
    out << "split " << nd.feature << " in {";
    for (std::size_t i = 0; i < nd.left_categories.size(); ++i) {
      if (i) out << ',';
      out << nd.left_categories[i];
    }
    out << "} missing_left " << format_double(nd.missing_left) << '\n';
  } else {
    out << "split " << nd.feature << " <= " << format_double(nd.threshold) << " missing_left "
        << format_double(nd.missing_left) << '\n';
  }
  write_node(out, tree, nd.left, depth + 1);
  write_node(out, tree, nd.right, depth + 1);
}

}  // namespace detail

inline void write_tree(std::ostream& out, const DecisionTree& tree) {
  out << "tree classes";
  for (const auto& c : tree.classes) out << ' ' << c;
  out << " smoothing " << format_double(tree.smoothing) << '\n';
  detail::write_node(out, tree, 0, 0);
}

inline DecisionTree parse_tree(const std::string& path) {
  std::ifstream in = open_input(path);
  DecisionTree tree;
  std::string line;
  std::size_t line_no = 0;
  struct Pending { int node; int depth; bool right; };
  std::vector<Pending> stack;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t indent = 0;
    while (indent < line.size() && line[indent] == ' ') ++indent;
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (!have_header) {
      if (tok[0] != "tree" || tok.size() < 3 || tok[1] != "classes")
        throw parse_error(path, line_no, "bad tree header");
      std::size_t i = 2;
      for (; i < tok.size() && tok[i] != "smoothing"; ++i) tree.classes.emplace_back(tok[i]);
      if (i + 1 < tok.size() && tok[i] == "smoothing") {
        auto s = parse_double(tok[i + 1]);
        if (!s) throw parse_error(path, line_no, "bad smoothing");
        tree.smoothing = *s;
      }
      if (tree.classes.size() < 2) throw parse_error(path, line_no, "need at least 2 classes");
      have_header = true;
      continue;
    }
    int depth = static_cast<int>(indent / 2);
    DecisionTree::Node nd;
    if (tok[0] == "leaf") {
      if (tok.size() != 2 + tree.classes.size()) throw parse_error(path, line_no, "bad leaf arity");
      auto c = parse_double(tok[1]);
      if (!c) throw parse_error(path, line_no, "bad leaf count");
      nd.count = *c;
      for (std::size_t i = 0; i < tree.classes.size(); ++i) {
        auto p = parse_double(tok[2 + i]);
        if (!p) throw parse_error(path, line_no, "bad posterior");
        nd.posterior.push_back(*p);
      }
      nd.class_weights.assign(tree.classes.size(), 0.0);
    } else if (tok[0] == "split") {
      nd.leaf = false;
      nd.feature = std::string(tok[1]);
      if (tok.size() >= 6 && tok[2] == "<=") {
        auto thr = parse_double(tok[3]);
        auto frac = parse_double(tok[5]);
        if (!thr || !frac || tok[4] != "missing_left") throw parse_error(path, line_no, "bad split line");
        nd.threshold = *thr;
        nd.missing_left = *frac;
      } else if (tok.size() >= 5 && tok[2] == "in") {
        std::string setstr(tok[3]);
        if (setstr.size() < 2 || setstr.front() != '{' || setstr.back() != '}')
          throw parse_error(path, line_no, "bad category set");
        nd.categorical = true;
        for (auto c : split_char(setstr.substr(1, setstr.size() - 2), ','))
          if (!c.empty()) nd.left_categories.emplace_back(c);
        auto frac = parse_double(tok[5]);
        if (tok[4] != "missing_left" || !frac) throw parse_error(path, line_no, "bad split line");
        nd.missing_left = *frac;
      } else {
        throw parse_error(path, line_no, "bad split line");
      }
      nd.class_weights.assign(tree.classes.size(), 0.0);
      nd.posterior.assign(tree.classes.size(), 0.0);
    } else {
      throw parse_error(path, line_no, "expected 'split' or 'leaf'");
    }

    int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(std::move(nd));
    if (id > 0) {
      if (stack.empty() || stack.back().depth != depth - 1)
        throw parse_error(path, line_no, "bad tree indentation");
      auto& parent = tree.nodes[static_cast<std::size_t>(stack.back().node)];
      if (!stack.back().right) {
        parent.left = id;
        stack.back().right = true;
      } else {
        parent.right = id;
        stack.pop_back();
      }
    }
    if (!tree.nodes[static_cast<std::size_t>(id)].leaf) stack.push_back({id, depth, false});
  }
  if (tree.nodes.empty()) throw std::runtime_error(path + ": empty tree file");
  if (!stack.empty()) throw std::runtime_error(path + ": truncated tree file");
  return tree;
}

}  // namespace prososeg
