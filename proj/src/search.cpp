#include "ewm/search.hpp"

#include "ewm/errors.hpp"
#include "ewm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>

namespace ewm {

namespace {

constexpr double kRelTol = 1e-12;

// Decision at one node: leaf (var < 0) or split on bins of `var` at `cut`.
struct Choice2 {
    double value = 0.0;
    int var = -1;
    std::uint32_t cut = 0;
    std::size_t arm = 0; // index into the allowed-arm list, leaves only
};

class Solver {
public:
    Solver(const TreeProblem& p, const SearchOptions& opts)
        : problem_(p), min_leaf_(std::max<std::size_t>(opts.min_leaf, 1)),
          threads_(opts.threads) {
        const auto& ds = *p.data;
        k_ = ds.dim();
        a_ = p.arms.size();
        const std::size_t m = p.rows.size();
        gain_.resize(m * a_);
        double abs_sum = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const std::size_t row = p.rows[r];
            for (std::size_t a = 0; a < a_; ++a) {
                const double g = p.scores[row * kNumArms + index(p.arms[a])];
                gain_[r * a_ + a] = g;
                abs_sum += std::abs(g);
            }
        }
        tol_ = kRelTol * abs_sum;
        if (p.thresholds.size() != k_) throw ConfigError("threshold list does not match covariates");
        bins_.assign(k_, std::vector<std::uint32_t>(m));
        nbins_.resize(k_);
        for (std::size_t k = 0; k < k_; ++k) {
            const auto& t = p.thresholds[k];
            nbins_[k] = static_cast<std::uint32_t>(t.size() + 1);
            for (std::size_t r = 0; r < m; ++r) {
                const double x = ds.x(p.rows[r], k);
                bins_[k][r] = static_cast<std::uint32_t>(std::upper_bound(t.begin(), t.end(), x) - t.begin());
            }
        }
    }

    void set_tolerance(double tol) { tol_ = tol; }

    std::vector<std::uint32_t> all_rows() const {
        std::vector<std::uint32_t> r(problem_.rows.size());
        std::iota(r.begin(), r.end(), 0u);
        return r;
    }

    Choice2 solve(const std::vector<std::uint32_t>& rows, int depth, bool top) const {
        Choice2 best = leaf(rows);
        if (depth <= 0 || rows.size() < 2 * min_leaf_) return best;
        if (depth == 1) return depth1(rows, best);
        if (depth == 2) return depth2(rows, best, top);
        return deeper(rows, depth, best, top);
    }

    // Appends the subtree for `rows` to `nodes` and returns its index.
    int build(const std::vector<std::uint32_t>& rows, int depth, std::vector<TreeNode>& nodes) const {
        const Choice2 c = solve(rows, depth, true);
        const int me = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (c.var < 0) {
            nodes[me].arm = problem_.arms[c.arm];
            return me;
        }
        std::vector<std::uint32_t> left, right;
        partition(rows, static_cast<std::size_t>(c.var), c.cut, left, right);
        nodes[me].var = c.var;
        nodes[me].threshold = problem_.thresholds[c.var][c.cut - 1];
        const int t = build(right, depth - 1, nodes);
        const int f = build(left, depth - 1, nodes);
        nodes[me].true_child = t;
        nodes[me].false_child = f;
        return me;
    }

private:
    const double* g(std::uint32_t r) const { return gain_.data() + static_cast<std::size_t>(r) * a_; }

    // Best label for given per-arm sums; first arm wins unless beaten by more than tol.
    std::pair<double, std::size_t> best_label(const double* sums) const {
        std::size_t best = 0;
        for (std::size_t a = 1; a < a_; ++a)
            if (sums[a] > sums[best] + tol_) best = a;
        return {sums[best], best};
    }

    Choice2 leaf(const std::vector<std::uint32_t>& rows) const {
        std::vector<double> sums(a_, 0.0);
        for (auto r : rows)
            for (std::size_t a = 0; a < a_; ++a) sums[a] += g(r)[a];
        auto [v, arm] = best_label(sums.data());
        Choice2 c;
        c.value = v;
        c.arm = arm;
        return c;
    }

    void partition(const std::vector<std::uint32_t>& rows, std::size_t k, std::uint32_t cut,
                   std::vector<std::uint32_t>& left, std::vector<std::uint32_t>& right) const {
        for (auto r : rows) (bins_[k][r] < cut ? left : right).push_back(r);
    }

    // Rows stably sorted by their bin on covariate k.
    std::vector<std::uint32_t> sorted_by(const std::vector<std::uint32_t>& rows, std::size_t k) const {
        auto out = rows;
        std::stable_sort(out.begin(), out.end(),
                         [&](std::uint32_t a, std::uint32_t b) { return bins_[k][a] < bins_[k][b]; });
        return out;
    }

    Choice2 depth1(const std::vector<std::uint32_t>& rows, Choice2 best) const {
        const std::size_t n = rows.size();
        std::vector<double> total(a_, 0.0), left(a_), right(a_);
        for (auto r : rows)
            for (std::size_t a = 0; a < a_; ++a) total[a] += g(r)[a];
        for (std::size_t k = 0; k < k_; ++k) {
            const auto order = sorted_by(rows, k);
            std::fill(left.begin(), left.end(), 0.0);
            std::size_t nl = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = order[i];
                for (std::size_t a = 0; a < a_; ++a) left[a] += g(r)[a];
                ++nl;
                if (i + 1 == n) break;
                const auto b = bins_[k][r];
                if (bins_[k][order[i + 1]] == b) continue;
                if (nl < min_leaf_ || n - nl < min_leaf_) continue;
                for (std::size_t a = 0; a < a_; ++a) right[a] = total[a] - left[a];
                const double v = best_label(left.data()).first + best_label(right.data()).first;
                if (v > best.value + tol_) {
                    best.value = v;
                    best.var = static_cast<int>(k);
                    best.cut = b + 1;
                }
            }
        }
        return best;
    }

    // Histograms over the bins present in a node, one block per covariate.
    struct Hist {
        std::vector<std::size_t> offset;   // per covariate, into count/sums
        std::vector<std::size_t> width;    // distinct bins per covariate
        std::vector<std::uint32_t> count;
        std::vector<double> sums;          // count.size() * A
    };

    // Best depth <= 1 value from a histogram holding n rows with per-arm totals `tot`.
    double best1(const Hist& h, std::size_t n, const double* tot) const {
        double best = best_label(tot).first;
        if (n < 2 * min_leaf_) return best;
        std::vector<double> pre(a_), rest(a_);
        for (std::size_t k = 0; k < k_; ++k) {
            std::fill(pre.begin(), pre.end(), 0.0);
            std::size_t np = 0;
            const std::size_t off = h.offset[k];
            for (std::size_t c = 0; c < h.width[k]; ++c) {
                const auto cnt = h.count[off + c];
                if (cnt == 0) continue;
                const double* s = h.sums.data() + (off + c) * a_;
                for (std::size_t a = 0; a < a_; ++a) pre[a] += s[a];
                np += cnt;
                if (np >= n) break;
                if (np < min_leaf_ || n - np < min_leaf_) continue;
                for (std::size_t a = 0; a < a_; ++a) rest[a] = tot[a] - pre[a];
                const double v = best_label(pre.data()).first + best_label(rest.data()).first;
                if (v > best + tol_) best = v;
            }
        }
        return best;
    }

    struct SweepBest {
        double value;
        std::uint32_t cut = 0;
        bool found = false;
    };

    Choice2 depth2(const std::vector<std::uint32_t>& rows, Choice2 best, bool top) const {
        const std::size_t n = rows.size();
        // compressed bin id of each node row, per covariate
        Hist full;
        full.offset.resize(k_);
        full.width.resize(k_);
        std::vector<std::vector<std::uint32_t>> cid(k_, std::vector<std::uint32_t>(n));
        std::vector<std::vector<std::uint32_t>> order(k_);
        std::size_t total_width = 0;
        for (std::size_t k = 0; k < k_; ++k) {
            std::vector<std::uint32_t> pos(n);
            std::iota(pos.begin(), pos.end(), 0u);
            std::stable_sort(pos.begin(), pos.end(), [&](std::uint32_t a, std::uint32_t b) {
                return bins_[k][rows[a]] < bins_[k][rows[b]];
            });
            std::uint32_t gidx = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (i > 0 && bins_[k][rows[pos[i]]] != bins_[k][rows[pos[i - 1]]]) ++gidx;
                cid[k][pos[i]] = gidx;
            }
            full.offset[k] = total_width;
            full.width[k] = n == 0 ? 0 : gidx + 1;
            total_width += full.width[k];
            order[k] = std::move(pos);
        }
        full.count.assign(total_width, 0);
        full.sums.assign(total_width * a_, 0.0);
        std::vector<double> tot(a_, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            const double* gr = g(rows[p]);
            for (std::size_t a = 0; a < a_; ++a) tot[a] += gr[a];
            for (std::size_t k = 0; k < k_; ++k) {
                const std::size_t slot = full.offset[k] + cid[k][p];
                ++full.count[slot];
                for (std::size_t a = 0; a < a_; ++a) full.sums[slot * a_ + a] += gr[a];
            }
        }

        auto sweep = [&](std::size_t k) {
            SweepBest sb{best.value};
            Hist left = full, right = full;
            std::fill(left.count.begin(), left.count.end(), 0u);
            std::fill(left.sums.begin(), left.sums.end(), 0.0);
            std::vector<double> ltot(a_, 0.0), rtot(a_);
            std::size_t nl = 0;
            const auto& ord = order[k];
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint32_t p = ord[i];
                const double* gr = g(rows[p]);
                for (std::size_t a = 0; a < a_; ++a) ltot[a] += gr[a];
                for (std::size_t kk = 0; kk < k_; ++kk) {
                    const std::size_t slot = full.offset[kk] + cid[kk][p];
                    ++left.count[slot];
                    --right.count[slot];
                    for (std::size_t a = 0; a < a_; ++a) {
                        left.sums[slot * a_ + a] += gr[a];
                        right.sums[slot * a_ + a] -= gr[a];
                    }
                }
                ++nl;
                if (i + 1 == n) break;
                const auto b = bins_[k][rows[p]];
                if (bins_[k][rows[ord[i + 1]]] == b) continue;
                if (nl < min_leaf_ || n - nl < min_leaf_) continue;
                for (std::size_t a = 0; a < a_; ++a) rtot[a] = tot[a] - ltot[a];
                const double v = best1(left, nl, ltot.data()) + best1(right, n - nl, rtot.data());
                if (v > sb.value + tol_) {
                    sb.value = v;
                    sb.cut = b + 1;
                    sb.found = true;
                }
            }
            return sb;
        };

        std::vector<SweepBest> per_k(k_, SweepBest{best.value});
        parallel_for(k_, top ? threads_ : 1u, [&](std::size_t k) { per_k[k] = sweep(k); });
        for (std::size_t k = 0; k < k_; ++k) {
            if (per_k[k].found && per_k[k].value > best.value + tol_) {
                best.value = per_k[k].value;
                best.var = static_cast<int>(k);
                best.cut = per_k[k].cut;
            }
        }
        return best;
    }

    Choice2 deeper(const std::vector<std::uint32_t>& rows, int depth, Choice2 best, bool top) const {
        struct Candidate {
            std::size_t k;
            std::uint32_t cut;
        };
        std::vector<Candidate> cands;
        const std::size_t n = rows.size();
        for (std::size_t k = 0; k < k_; ++k) {
            const auto order = sorted_by(rows, k);
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto b = bins_[k][order[i]];
                if (bins_[k][order[i + 1]] == b) continue;
                const std::size_t nl = i + 1;
                if (nl < min_leaf_ || n - nl < min_leaf_) continue;
                cands.push_back({k, b + 1});
            }
        }
        std::vector<double> value(cands.size());
        parallel_for(cands.size(), top ? threads_ : 1u, [&](std::size_t c) {
            std::vector<std::uint32_t> left, right;
            partition(rows, cands[c].k, cands[c].cut, left, right);
            value[c] = solve(left, depth - 1, false).value + solve(right, depth - 1, false).value;
        });
        for (std::size_t c = 0; c < cands.size(); ++c) {
            if (value[c] > best.value + tol_) {
                best.value = value[c];
                best.var = static_cast<int>(cands[c].k);
                best.cut = cands[c].cut;
            }
        }
        return best;
    }

    const TreeProblem& problem_;
    std::size_t min_leaf_;
    unsigned threads_;
    std::size_t k_ = 0;
    std::size_t a_ = 0;
    double tol_ = 0.0;
    std::vector<double> gain_;
    std::vector<std::vector<std::uint32_t>> bins_;
    std::vector<std::uint32_t> nbins_;
};

std::vector<std::vector<double>> thresholds_for(const RctDataset& ds,
                                                std::span<const std::size_t> rows,
                                                std::size_t max_candidates) {
    std::vector<std::vector<double>> out(ds.dim());
    std::vector<double> col(rows.size());
    for (std::size_t k = 0; k < ds.dim(); ++k) {
        for (std::size_t i = 0; i < rows.size(); ++i) col[i] = ds.x(rows[i], k);
        out[k] = midpoint_thresholds(col, max_candidates);
    }
    return out;
}

std::vector<Arm> normalized_arms(std::span<const Arm> arms) {
    std::vector<Arm> out(arms.begin(), arms.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void check_present(const RctDataset& ds, const PerArm<double>& props, std::span<const Arm> arms) {
    for (Arm a : arms) {
        if (ds.arm_counts()[index(a)] == 0 || !(props[index(a)] > 0.0))
            throw NumericError("arm " + std::string(to_string(a)) + " is absent from the data");
    }
}

double abs_score_sum(std::span<const double> scores) {
    double s = 0.0;
    for (double v : scores) s += std::abs(v);
    return s;
}

TreeSolution solve_with_tol(const TreeProblem& problem, int depth, const SearchOptions& opts,
                            double tol) {
    if (problem.data == nullptr) throw ConfigError("tree problem has no data");
    if (problem.arms.empty()) throw ConfigError("tree problem has no arms");
    if (depth < 0 || depth > kMaxTreeDepth)
        throw ConfigError("tree depth must be in [0, " + std::to_string(kMaxTreeDepth) + "]");
    Solver solver(problem, opts);
    if (tol >= 0.0) solver.set_tolerance(tol);
    std::vector<TreeNode> nodes;
    const auto rows = solver.all_rows();
    solver.build(rows, depth, nodes);
    TreeSolution sol{DecisionTree(problem.data->schema(), std::move(nodes)), 0.0};
    for (auto row : problem.rows)
        sol.objective += problem.scores[row * kNumArms + index(sol.tree.assign(problem.data->x(row)))];
    return sol;
}

double welfare_of(const DecisionTree& tree, std::span<const double> scores, const RctDataset& ds) {
    // Same summation as empirical_welfare: mean of per-row IPW contributions.
    std::vector<double> s(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) s[i] = scores[i * kNumArms + index(tree.assign(ds.x(i)))];
    return mean(s);
}

} // namespace

std::vector<double> midpoint_thresholds(std::span<const double> values, std::size_t max_candidates) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) return {};
    auto midpoint = [&](std::size_t i) {
        const double lo = distinct[i], hi = distinct[i + 1];
        double t = (lo + hi) / 2.0;
        if (!std::isfinite(t)) t = lo / 2.0 + hi / 2.0;
        if (!(t > lo) || t > hi) t = hi;
        return t;
    };
    std::vector<double> out;
    const std::size_t gaps = distinct.size() - 1;
    if (max_candidates == 0 || gaps <= max_candidates) {
        out.reserve(gaps);
        for (std::size_t i = 0; i < gaps; ++i) out.push_back(midpoint(i));
        return out;
    }
    const std::size_t n = sorted.size();
    for (std::size_t b = 1; b <= max_candidates; ++b) {
        const std::size_t rank = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(static_cast<double>(b) * n / (max_candidates + 1))));
        const double v = sorted[std::min(rank, n) - 1];
        const auto di = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
        if (di < gaps) out.push_back(midpoint(di));
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<double> arm_scores(const WelfareOutcome& w, const RctDataset& ds,
                               const PerArm<double>& props) {
    if (w.size() != ds.size()) throw DataError("welfare outcome does not match dataset size");
    std::vector<double> s(ds.size() * kNumArms, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Arm d = ds.arm(i);
        const double p = props[index(d)];
        if (!(p > 0.0)) throw NumericError("row with zero-propensity arm");
        s[i * kNumArms + index(d)] = w.w[i] / p;
    }
    return s;
}

TreeSolution solve_tree(const TreeProblem& problem, int depth, const SearchOptions& opts) {
    return solve_with_tol(problem, depth, opts, -1.0);
}

SearchResult exhaustive_search(const WelfareOutcome& w, const RctDataset& ds,
                               const PerArm<double>& props, std::span<const Arm> arms, int depth,
                               const SearchOptions& opts) {
    if (depth < 1 || depth > 3) throw ConfigError("exhaustive search depth must be 1, 2 or 3");
    const auto allowed = normalized_arms(arms);
    if (allowed.size() < 2) throw ConfigError("exhaustive search needs at least two arms");
    if (ds.empty()) throw NumericError("exhaustive search on an empty dataset");
    check_present(ds, props, allowed);

    const auto scores = arm_scores(w, ds, props);
    TreeProblem problem;
    problem.data = &ds;
    problem.scores = scores;
    problem.rows.resize(ds.size());
    std::iota(problem.rows.begin(), problem.rows.end(), std::size_t{0});
    problem.arms = allowed;
    problem.thresholds = thresholds_for(ds, problem.rows, opts.max_candidates);

    auto sol = solve_tree(problem, depth, opts);
    const double welfare = welfare_of(sol.tree, scores, ds);
    return {std::move(sol.tree), welfare};
}

TwoStepResult two_step_search(const WelfareOutcome& w, const RctDataset& ds,
                              const PerArm<double>& props, int depth_per_step,
                              const SearchOptions& opts) {
    if (depth_per_step < 1 || 2 * depth_per_step > kMaxTreeDepth)
        throw ConfigError("two-step search depth per step must be in [1, 3]");
    if (ds.empty()) throw NumericError("two-step search on an empty dataset");
    check_present(ds, props, kAllArms);

    const auto scores = arm_scores(w, ds, props);
    const double tol = kRelTol * abs_score_sum(scores);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});

    const std::pair<Arm, Arm> pairs[] = {{Arm::T, Arm::NT}, {Arm::NT, Arm::O}, {Arm::T, Arm::O}};
    TwoStepResult result;
    bool have = false;
    for (const auto& pair : pairs) {
        const Arm excluded = [&] {
            for (Arm a : kAllArms)
                if (a != pair.first && a != pair.second) return a;
            return Arm::O;
        }();
        TreeProblem step1;
        step1.data = &ds;
        step1.scores = scores;
        step1.rows = all;
        step1.arms = normalized_arms(std::array{pair.first, pair.second});
        step1.thresholds = thresholds_for(ds, all, opts.max_candidates);
        const auto first = solve_with_tol(step1, depth_per_step, opts, tol).tree;

        // rows per step-one leaf
        std::vector<std::vector<std::size_t>> leaf_rows(first.nodes().size());
        for (std::size_t i = 0; i < ds.size(); ++i) leaf_rows[first.leaf_of(ds.x(i))].push_back(i);

        std::vector<TreeNode> nodes;
        std::function<void(int)> graft = [&](int idx) {
            const auto& n = first.nodes()[idx];
            if (!n.is_leaf()) {
                const int me = static_cast<int>(nodes.size());
                nodes.push_back(n);
                nodes[me].true_child = static_cast<int>(nodes.size());
                graft(n.true_child);
                nodes[me].false_child = static_cast<int>(nodes.size());
                graft(n.false_child);
                return;
            }
            const auto& rows = leaf_rows[idx];
            if (rows.size() < std::max<std::size_t>(opts.min_leaf, 1)) {
                nodes.push_back(n);
                return;
            }
            TreeProblem step2;
            step2.data = &ds;
            step2.scores = scores;
            step2.rows = rows;
            step2.arms = {n.arm, excluded}; // incumbent first: kept unless strictly beaten
            step2.thresholds = thresholds_for(ds, rows, opts.max_candidates);
            SearchOptions inner = opts;
            inner.threads = opts.threads;
            const auto sub = solve_with_tol(step2, depth_per_step, inner, tol).tree;
            const int offset = static_cast<int>(nodes.size());
            for (TreeNode s : sub.nodes()) {
                if (!s.is_leaf()) {
                    s.true_child += offset;
                    s.false_child += offset;
                }
                nodes.push_back(s);
            }
        };
        graft(0);
        DecisionTree combined(ds.schema(), std::move(nodes));
        const double welfare = welfare_of(combined, scores, ds);
        result.candidates.push_back({pair, welfare});
        if (!have || welfare > result.welfare) {
            have = true;
            result.tree = std::move(combined);
            result.welfare = welfare;
            result.start_pair = pair;
            result.first_step = first;
        }
    }
    return result;
}

} // namespace ewm
