#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace softbart {

/// Logistic gate. The exponent is clamped at +/-500 to avoid overflow.
inline double gating(double u) {
  u = std::clamp(u, -500.0, 500.0);
  return 1.0 / (1.0 + std::exp(-u));
}

/// Binary tree node. A node is a leaf iff it has no children.
struct Node {
  int var = -1;
  double cut = 0.0;
  double mu = 0.0;
  std::unique_ptr<Node> left;
  std::unique_ptr<Node> right;

  Node() = default;
  explicit Node(double leaf_value) : mu(leaf_value) {}
  Node(const Node& other)
      : var(other.var), cut(other.cut), mu(other.mu),
        left(other.left ? std::make_unique<Node>(*other.left) : nullptr),
        right(other.right ? std::make_unique<Node>(*other.right) : nullptr) {}
  Node& operator=(const Node& other) {
    if (this != &other) {
      Node tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }
  Node(Node&&) noexcept = default;
  Node& operator=(Node&&) noexcept = default;

  bool is_leaf() const { return !left; }

  /// Turns a leaf into a branch with two zero-valued leaf children.
  void grow(int split_var, double cutpoint) {
    var = split_var;
    cut = cutpoint;
    mu = 0.0;
    left = std::make_unique<Node>(0.0);
    right = std::make_unique<Node>(0.0);
  }

  /// Collapses a branch into a leaf.
  void prune(double leaf_value = 0.0) {
    var = -1;
    cut = 0.0;
    mu = leaf_value;
    left.reset();
    right.reset();
  }
};

enum class Direction : unsigned char { kLeft, kRight };

/// Root-to-node address. The empty path is the root.
using NodePath = std::vector<Direction>;

/// A soft regression tree with its own bandwidth. Hard trees use indicator
/// splits and carry tau = 0.
struct SoftTree {
  Node root;
  double tau = 0.1;
  bool hard = false;
};

/// Per-dimension interval bounds [lower_j, upper_j].
struct Hyperrect {
  std::vector<double> lower;
  std::vector<double> upper;

  static Hyperrect unit_cube(std::size_t dims) {
    return Hyperrect{std::vector<double>(dims, 0.0),
                     std::vector<double>(dims, 1.0)};
  }
};

namespace detail {

/// Probability mass sent to the left child at a branch.
inline double left_mass(double x, double cut, double tau, bool hard) {
  if (hard) return x <= cut ? 1.0 : 0.0;
  return gating((cut - x) / tau);
}

template <typename Fn>
void for_each_leaf_impl(const Node& node, Fn& fn) {
  if (node.is_leaf()) {
    fn(node);
    return;
  }
  for_each_leaf_impl(*node.left, fn);
  for_each_leaf_impl(*node.right, fn);
}

template <typename Fn>
void for_each_leaf_impl(Node& node, Fn& fn) {
  if (node.is_leaf()) {
    fn(node);
    return;
  }
  for_each_leaf_impl(*node.left, fn);
  for_each_leaf_impl(*node.right, fn);
}

inline void leaf_weights_impl(const Node& node, const double* x, double tau,
                              bool hard, double mass,
                              std::vector<double>& out) {
  if (node.is_leaf()) {
    out.push_back(mass);
    return;
  }
  const double p = left_mass(x[node.var], node.cut, tau, hard);
  leaf_weights_impl(*node.left, x, tau, hard, mass * p, out);
  leaf_weights_impl(*node.right, x, tau, hard, mass * (1.0 - p), out);
}

inline void basis_impl(const Node& node, const Eigen::MatrixXd& X, double tau,
                       bool hard, const Eigen::ArrayXd& mass,
                       Eigen::MatrixXd& phi, Eigen::Index& column) {
  if (node.is_leaf()) {
    phi.col(column++) = mass.matrix();
    return;
  }
  const Eigen::Index n = X.rows();
  Eigen::ArrayXd p(n);
  const auto xj = X.col(node.var);
  for (Eigen::Index i = 0; i < n; ++i) {
    p[i] = left_mass(xj[i], node.cut, tau, hard);
  }
  basis_impl(*node.left, X, tau, hard, mass * p, phi, column);
  basis_impl(*node.right, X, tau, hard, mass * (1.0 - p), phi, column);
}

}  // namespace detail

/// Visits leaves left to right (depth-first). This is the canonical leaf order.
template <typename Fn>
void for_each_leaf(const Node& root, Fn fn) {
  detail::for_each_leaf_impl(root, fn);
}

template <typename Fn>
void for_each_leaf(Node& root, Fn fn) {
  detail::for_each_leaf_impl(root, fn);
}

inline std::size_t num_leaves(const Node& root) {
  if (root.is_leaf()) return 1;
  return num_leaves(*root.left) + num_leaves(*root.right);
}

inline std::size_t num_branches(const Node& root) {
  if (root.is_leaf()) return 0;
  return 1 + num_branches(*root.left) + num_branches(*root.right);
}

inline std::size_t depth_of(const NodePath& path) { return path.size(); }

inline std::vector<double> leaf_values(const Node& root) {
  std::vector<double> out;
  for_each_leaf(root, [&](const Node& leaf) { out.push_back(leaf.mu); });
  return out;
}

inline void set_leaf_values(Node& root, std::span<const double> values) {
  std::size_t k = 0;
  for_each_leaf(root, [&](Node& leaf) {
    if (k >= values.size()) {
      throw std::invalid_argument("set_leaf_values: too few values");
    }
    leaf.mu = values[k++];
  });
  if (k != values.size()) {
    throw std::invalid_argument("set_leaf_values: too many values");
  }
}

/// Leaf weights phi_l(x) in canonical leaf order. Soft trees route mass
/// psi((C - x_j) / tau) to the left child, so tau -> 0 recovers the hard rule
/// [x_j <= C].
inline std::vector<double> leaf_weights(const SoftTree& tree,
                                        std::span<const double> x) {
  std::vector<double> out;
  detail::leaf_weights_impl(tree.root, x.data(), tree.tau, tree.hard, 1.0,
                            out);
  return out;
}

inline double tree_predict(const SoftTree& tree, std::span<const double> x) {
  const auto w = leaf_weights(tree, x);
  const auto mu = leaf_values(tree.root);
  double out = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) out += w[k] * mu[k];
  return out;
}

/// N x L matrix of leaf weights for every row of X.
inline Eigen::MatrixXd leaf_basis(const SoftTree& tree,
                                  const Eigen::MatrixXd& X) {
  Eigen::MatrixXd phi(X.rows(), static_cast<Eigen::Index>(num_leaves(tree.root)));
  Eigen::Index column = 0;
  detail::basis_impl(tree.root, X, tree.tau, tree.hard,
                     Eigen::ArrayXd::Ones(X.rows()), phi, column);
  return phi;
}

inline Eigen::VectorXd leaf_vector(const Node& root) {
  const auto mu = leaf_values(root);
  return Eigen::Map<const Eigen::VectorXd>(mu.data(),
                                           static_cast<Eigen::Index>(mu.size()));
}

/// Tree predictions for every row of X.
inline Eigen::VectorXd tree_predict(const SoftTree& tree,
                                    const Eigen::MatrixXd& X) {
  if (tree.root.is_leaf()) {
    return Eigen::VectorXd::Constant(X.rows(), tree.root.mu);
  }
  return leaf_basis(tree, X) * leaf_vector(tree.root);
}

/// Row-wise sum of tree predictions.
inline Eigen::VectorXd forest_predict(std::span<const SoftTree> trees,
                                      const Eigen::MatrixXd& X,
                                      Eigen::Index expected_cols = -1) {
  if (expected_cols >= 0 && X.cols() != expected_cols) {
    throw std::invalid_argument("forest_predict: expected " +
                                std::to_string(expected_cols) +
                                " columns, got " + std::to_string(X.cols()));
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
  for (const auto& tree : trees) out += tree_predict(tree, X);
  return out;
}

inline const Node* find_node(const Node& root, const NodePath& path) {
  const Node* node = &root;
  for (Direction d : path) {
    if (node->is_leaf()) return nullptr;
    node = d == Direction::kLeft ? node->left.get() : node->right.get();
  }
  return node;
}

inline Node* find_node(Node& root, const NodePath& path) {
  return const_cast<Node*>(find_node(static_cast<const Node&>(root), path));
}

/// Region reaching the node at `path`, narrowing intervals as if each
/// ancestor were a hard split.
inline Hyperrect branch_hyperrect(const SoftTree& tree, const NodePath& path,
                                  std::size_t dims) {
  Hyperrect rect = Hyperrect::unit_cube(dims);
  const Node* node = &tree.root;
  for (Direction d : path) {
    if (node->is_leaf()) {
      throw std::out_of_range("branch_hyperrect: path leaves the tree");
    }
    const auto j = static_cast<std::size_t>(node->var);
    if (d == Direction::kLeft) {
      rect.upper[j] = std::min(rect.upper[j], node->cut);
      node = node->left.get();
    } else {
      rect.lower[j] = std::max(rect.lower[j], node->cut);
      node = node->right.get();
    }
  }
  return rect;
}

namespace detail {
template <typename Fn>
void visit_paths(const Node& node, NodePath& path, Fn& fn) {
  fn(node, static_cast<const NodePath&>(path));
  if (node.is_leaf()) return;
  path.push_back(Direction::kLeft);
  visit_paths(*node.left, path, fn);
  path.back() = Direction::kRight;
  visit_paths(*node.right, path, fn);
  path.pop_back();
}
}  // namespace detail

/// Pre-order visit of every node with its path.
template <typename Fn>
void for_each_node(const Node& root, Fn fn) {
  NodePath path;
  detail::visit_paths(root, path, fn);
}

inline std::vector<NodePath> leaf_paths(const Node& root) {
  std::vector<NodePath> out;
  for_each_node(root, [&](const Node& n, const NodePath& p) {
    if (n.is_leaf()) out.push_back(p);
  });
  return out;
}

/// Branches whose children are both leaves (the prunable set).
inline std::vector<NodePath> nog_paths(const Node& root) {
  std::vector<NodePath> out;
  for_each_node(root, [&](const Node& n, const NodePath& p) {
    if (!n.is_leaf() && n.left->is_leaf() && n.right->is_leaf()) {
      out.push_back(p);
    }
  });
  return out;
}

/// Adds the branch count of each split variable into `counts`.
inline void accumulate_var_counts(const Node& root, std::vector<int>& counts) {
  if (root.is_leaf()) return;
  counts.at(static_cast<std::size_t>(root.var)) += 1;
  accumulate_var_counts(*root.left, counts);
  accumulate_var_counts(*root.right, counts);
}

inline bool same_shape(const Node& a, const Node& b) {
  if (a.is_leaf() != b.is_leaf()) return false;
  if (a.is_leaf()) return true;
  return a.var == b.var && a.cut == b.cut && same_shape(*a.left, *b.left) &&
         same_shape(*a.right, *b.right);
}

}  // namespace softbart
