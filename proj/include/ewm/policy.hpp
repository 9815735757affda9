#pragma once

#include "ewm/arm.hpp"
#include "ewm/dataset.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ewm {

inline constexpr int kMaxTreeDepth = 6;

/// One node of a flattened tree. A node with `var < 0` is a leaf.
struct TreeNode {
    int var = -1;
    double threshold = 0.0;
    int true_child = -1; // taken iff x[var] >= threshold
    int false_child = -1;
    Arm arm = Arm::NT;

    bool is_leaf() const noexcept { return var < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary tree of axis-aligned splits with arm-labelled leaves. Nodes are
/// stored in preorder with the root at index 0. Immutable once built.
class DecisionTree {
public:
    DecisionTree() : DecisionTree({}, Arm::NT) {}
    DecisionTree(std::vector<std::string> covariates, Arm leaf_arm);

    // Validates structure: children in range, every node reachable once,
    // finite thresholds, var < covariates.size(), depth <= kMaxTreeDepth.
    DecisionTree(std::vector<std::string> covariates, std::vector<TreeNode> nodes);

    static DecisionTree split(std::vector<std::string> covariates, std::size_t var,
                              double threshold, const DecisionTree& when_true,
                              const DecisionTree& when_false);

    Arm assign(std::span<const double> x) const;

    // Index of the leaf reached by x.
    std::size_t leaf_of(std::span<const double> x) const;

    int depth() const noexcept { return depth_; }
    std::size_t dim() const noexcept { return covariates_.size(); }
    bool is_leaf_only() const noexcept { return nodes_.front().is_leaf(); }
    std::size_t num_leaves() const noexcept;

    const std::vector<std::string>& covariates() const noexcept { return covariates_; }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

    /// Collapses splits whose subtrees are identical leaves. Never changes
    /// any assignment.
    DecisionTree pruned() const;

    /// Swaps arm labels a <-> b in every leaf.
    DecisionTree relabeled(Arm a, Arm b) const;

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

private:
    std::vector<std::string> covariates_;
    std::vector<TreeNode> nodes_;
    int depth_ = 0;
};

/// Total assignment rule: either one arm for everyone or a decision tree.
class AssignmentPolicy {
public:
    AssignmentPolicy() : kind_(Arm::NT) {}
    AssignmentPolicy(DecisionTree tree);

    static AssignmentPolicy uniform(Arm a) { return AssignmentPolicy(a); }

    Arm assign(std::span<const double> x) const;
    std::vector<Arm> assign_all(const RctDataset& ds) const;

    bool is_uniform() const noexcept { return std::holds_alternative<Arm>(kind_); }
    Arm uniform_arm() const { return std::get<Arm>(kind_); }
    const DecisionTree& tree() const { return std::get<DecisionTree>(kind_); }

    // Arms this policy can emit.
    std::vector<Arm> arms_used() const;

    // Tree form (a leaf-only tree over `covariates` for uniform policies).
    DecisionTree as_tree(const std::vector<std::string>& covariates = {}) const;

    friend bool operator==(const AssignmentPolicy&, const AssignmentPolicy&) = default;

private:
    explicit AssignmentPolicy(Arm a) : kind_(a) {}
    std::variant<Arm, DecisionTree> kind_;
};

/// Fraction of rows assigned to each arm.
PerArm<double> shares(const AssignmentPolicy& policy, const RctDataset& ds);

// "37% T, 19% NT, 44% O" ordered T, NT, O; arms with zero share are omitted.
std::string format_shares(const PerArm<double>& s);

// {"covariates":[...],"root":{"split":{"var":i,"ge":t,"true":..,"false":..}} | {"leaf":"T"}}
std::string policy_to_json(const AssignmentPolicy& policy);
std::string tree_to_json(const DecisionTree& tree);

// Throws DataError on malformed input, unknown arm tokens, non-finite thresholds
// or depth > kMaxTreeDepth. A leaf-only document yields a uniform policy.
AssignmentPolicy policy_from_json(std::string_view text);
DecisionTree tree_from_json(std::string_view text);

// Indented text rendering, one line per node, nodes numbered in heap order.
std::string render_text(const DecisionTree& tree);
std::string render_dot(const DecisionTree& tree);

} // namespace ewm
