#pragma once

#include "ewm/arm.hpp"
#include "ewm/dataset.hpp"
#include "ewm/policy.hpp"
#include "ewm/welfare.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ewm {

struct SearchOptions {
    std::size_t min_leaf = 5;       // rows required on each side of every split
    std::size_t max_candidates = 0; // per-covariate threshold cap; 0 = every midpoint
    unsigned threads = 1;
};

struct SearchResult {
    DecisionTree tree;
    double welfare = 0.0; // empirical_welfare(tree) on the search data
};

/// Midpoints between consecutive sorted distinct values. With a positive
/// `max_candidates`, keeps at most that many, spread evenly over row ranks.
/// Every returned threshold t separates its neighbours: v_i < t <= v_{i+1}.
std::vector<double> midpoint_thresholds(std::span<const double> values, std::size_t max_candidates);

/// Per-row IPW scores w_i * 1{d_i = j} / p_j laid out row-major, kNumArms per row.
std::vector<double> arm_scores(const WelfareOutcome& w, const RctDataset& ds,
                               const PerArm<double>& props);

/// Low-level problem: maximize sum over `rows` of scores[row][arm(leaf)] over
/// trees of depth <= `depth` whose splits use `thresholds[k]` and leave at
/// least min_leaf rows on both sides. `arms` lists allowed leaf labels in
/// tie-break preference order.
struct TreeProblem {
    const RctDataset* data = nullptr;
    std::span<const double> scores;
    std::vector<std::size_t> rows;
    std::vector<Arm> arms;
    std::vector<std::vector<double>> thresholds;
};

struct TreeSolution {
    DecisionTree tree;
    double objective = 0.0; // sum of scores under the tree (not divided by n)
};

TreeSolution solve_tree(const TreeProblem& problem, int depth, const SearchOptions& opts);

/// Exact maximizer of empirical welfare over depth <= `depth` trees (depth 1..3)
/// with leaves restricted to `arms`. Ties prefer shallower trees, then lower
/// covariate index, then smaller threshold, then arm order NT < T < O.
SearchResult exhaustive_search(const WelfareOutcome& w, const RctDataset& ds,
                               const PerArm<double>& props, std::span<const Arm> arms, int depth,
                               const SearchOptions& opts = {});

struct TwoStepResult {
    DecisionTree tree;
    double welfare = 0.0;
    std::pair<Arm, Arm> start_pair{Arm::T, Arm::NT};
    // Welfare reached by each starting pair, in the order tried.
    std::vector<std::pair<std::pair<Arm, Arm>, double>> candidates;
    // Step-one tree of the winning pair.
    DecisionTree first_step;
};

/// Depth 3 + 3 heuristic: for each starting pair, an exact depth-3 tree over
/// that pair, then within every leaf an exact depth-3 subtree over the leaf's
/// arm and the excluded arm. The best pair by empirical welfare wins.
TwoStepResult two_step_search(const WelfareOutcome& w, const RctDataset& ds,
                              const PerArm<double>& props, int depth_per_step = 3,
                              const SearchOptions& opts = {});

} // namespace ewm
