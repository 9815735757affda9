#include "ewm/testdata.hpp"

#include "ewm/csv.hpp"
#include "ewm/errors.hpp"
#include "ewm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ewm {

namespace {

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual double predict(std::span<const double> x) const = 0;
};

// Plain k-nearest-neighbour average on standardized covariates.
class Knn final : public Predictor {
public:
    Knn(const RctDataset& ds, std::span<const std::size_t> rows, std::span<const double> values, std::size_t k,
        std::vector<double> center, std::vector<double> scale)
        : dim_(ds.dim()), k_(k), center_(std::move(center)), scale_(std::move(scale)) {
        points_.reserve(rows.size() * dim_);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t d = 0; d < dim_; ++d) points_.push_back(standardize(ds.x(rows[r], d), d));
            values_.push_back(values[r]);
        }
    }

    double predict(std::span<const double> x) const override {
        const std::size_t n = values_.size();
        std::vector<double> z(dim_);
        for (std::size_t d = 0; d < dim_; ++d) z[d] = standardize(x[d], d);
        std::vector<std::pair<double, std::size_t>> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const double* p = points_.data() + i * dim_;
            for (std::size_t d = 0; d < dim_; ++d) s += (p[d] - z[d]) * (p[d] - z[d]);
            dist[i] = {s, i};
        }
        // ties broken by training order
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_ - 1), dist.end());
        std::sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        double sum = 0.0;
        for (std::size_t i = 0; i < k_; ++i) sum += values_[dist[i].second];
        return sum / static_cast<double>(k_);
    }

private:
    double standardize(double v, std::size_t d) const { return (v - center_[d]) * scale_[d]; }

    std::size_t dim_;
    std::size_t k_;
    std::vector<double> center_;
    std::vector<double> scale_; // 1/sd, or 0 for a constant covariate
    std::vector<double> points_;
    std::vector<double> values_;
};

// Least-squares regression tree.
class RegressionTree final : public Predictor {
public:
    RegressionTree(const RctDataset& ds, std::span<const std::size_t> rows, std::span<const double> values,
                   const CondMeanConfig& cfg)
        : ds_(ds), values_(values.begin(), values.end()), cfg_(cfg) {
        std::vector<std::size_t> split_rows, est_rows;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (cfg.honest && r % 2 == 1)
                est_rows.push_back(r);
            else
                split_rows.push_back(r);
        }
        if (!cfg.honest) est_rows = split_rows;
        rows_.assign(rows.begin(), rows.end());
        grow(split_rows, est_rows, 0);
        values_.clear();
        rows_.clear();
    }

    double predict(std::span<const double> x) const override {
        std::size_t i = 0;
        while (nodes_[i].var >= 0)
            i = x[static_cast<std::size_t>(nodes_[i].var)] >= nodes_[i].threshold ? nodes_[i].right : nodes_[i].left;
        return nodes_[i].value;
    }

private:
    struct Node {
        int var = -1;
        double threshold = 0.0;
        std::size_t left = 0, right = 0;
        double value = 0.0;
    };

    double mean_of(const std::vector<std::size_t>& idx) const {
        double s = 0.0;
        for (auto r : idx) s += values_[r];
        return s / static_cast<double>(idx.size());
    }

    double x(std::size_t r, std::size_t k) const { return ds_.x(rows_[r], k); }

    std::size_t grow(const std::vector<std::size_t>& split, const std::vector<std::size_t>& est, int depth) {
        const std::size_t me = nodes_.size();
        nodes_.emplace_back();
        nodes_[me].value = est.empty() ? mean_of(split) : mean_of(est);
        if (depth >= cfg_.max_depth || split.size() < 2 * cfg_.min_leaf) return me;

        double total = 0.0;
        for (auto r : split) total += values_[r];
        const double n = static_cast<double>(split.size());
        const double base = total * total / n;
        double best_gain = 1e-12 * (std::abs(base) + 1.0);
        int best_var = -1;
        double best_thr = 0.0;
        std::vector<std::size_t> order = split;
        for (std::size_t k = 0; k < ds_.dim(); ++k) {
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a, k) < x(b, k); });
            double left = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                left += values_[order[i]];
                const std::size_t nl = i + 1;
                if (x(order[i], k) == x(order[i + 1], k)) continue;
                if (nl < cfg_.min_leaf || order.size() - nl < cfg_.min_leaf) continue;
                const double right = total - left;
                const double gain = left * left / static_cast<double>(nl) +
                                    right * right / static_cast<double>(order.size() - nl) - base;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_var = static_cast<int>(k);
                    best_thr = 0.5 * (x(order[i], k) + x(order[i + 1], k));
                }
            }
        }
        if (best_var < 0) return me;
        const auto k = static_cast<std::size_t>(best_var);
        std::vector<std::size_t> sl, sr, el, er;
        for (auto r : split) (x(r, k) >= best_thr ? sr : sl).push_back(r);
        for (auto r : est) (x(r, k) >= best_thr ? er : el).push_back(r);
        const std::size_t l = grow(sl, el, depth + 1);
        const std::size_t r = grow(sr, er, depth + 1);
        nodes_[me].var = best_var;
        nodes_[me].threshold = best_thr;
        nodes_[me].left = l;
        nodes_[me].right = r;
        return me;
    }

    const RctDataset& ds_;
    std::vector<double> values_;
    std::vector<std::size_t> rows_;
    CondMeanConfig cfg_;
    std::vector<Node> nodes_;
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

struct CondMeanModel::Impl {
    PerArm<std::unique_ptr<Predictor>> mean;
    std::unique_ptr<Predictor> takeup;
};

CondMeanMethod parse_cond_mean_method(std::string_view token) {
    if (token == "knn") return CondMeanMethod::Knn;
    if (token == "tree") return CondMeanMethod::Tree;
    throw ConfigError("unknown conditional-mean method '" + std::string(token) + "' (expected knn or tree)");
}

double CondMeanModel::mean(Arm arm, std::span<const double> x) const { return impl_->mean[index(arm)]->predict(x); }

double CondMeanModel::takeup(std::span<const double> x) const {
    return std::clamp(impl_->takeup->predict(x), 0.0, 1.0);
}

CondMeanModel fit_cond_means(const RctDataset& ds, std::span<const double> y, const CondMeanConfig& config) {
    if (y.size() != ds.size()) throw DataError("outcome does not match dataset size");
    const std::size_t dim = ds.dim();
    std::vector<double> center(dim, 0.0), scale(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) {
        std::vector<double> col(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) col[i] = ds.x(i, d);
        center[d] = ewm::mean(col);
        const double sd = sample_sd(col);
        scale[d] = sd > 0.0 ? 1.0 / sd : 0.0;
    }

    auto make = [&](std::span<const std::size_t> rows, std::span<const double> values,
                    const std::string& what) -> std::unique_ptr<Predictor> {
        const std::size_t n = rows.size();
        if (config.method == CondMeanMethod::Knn) {
            const std::size_t k = config.k > 0 ? config.k
                                               : static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.7)));
            if (n == 0 || k > n)
                throw DataError(what + " has " + std::to_string(n) + " rows, fewer than k = " + std::to_string(k));
            return std::make_unique<Knn>(ds, rows, values, k, center, scale);
        }
        if (n == 0 || n < config.min_leaf)
            throw DataError(what + " has " + std::to_string(n) + " rows, fewer than min_leaf = " +
                            std::to_string(config.min_leaf));
        return std::make_unique<RegressionTree>(ds, rows, values, config);
    };

    auto impl = std::make_shared<CondMeanModel::Impl>();
    PerArm<std::vector<std::size_t>> rows;
    PerArm<std::vector<double>> values;
    std::vector<double> z_opt;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        rows[index(ds.arm(i))].push_back(i);
        values[index(ds.arm(i))].push_back(y[i]);
        if (ds.arm(i) == Arm::O) z_opt.push_back(ds.choice(i) == Choice::T ? 1.0 : 0.0);
    }
    for (Arm a : kAllArms)
        impl->mean[index(a)] = make(rows[index(a)], values[index(a)], "arm " + std::string(to_string(a)));
    impl->takeup = make(rows[index(Arm::O)], z_opt, "opt-in take-up sample");

    CondMeanModel model;
    model.config_ = config;
    model.impl_ = impl;
    model.fitted_.resize(ds.size());
    model.residuals_.resize(ds.size());
    model.fitted_takeup_.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        model.fitted_[i] = impl->mean[index(ds.arm(i))]->predict(ds.x(i));
        model.residuals_[i] = y[i] - model.fitted_[i];
        model.fitted_takeup_[i] = std::clamp(impl->takeup->predict(ds.x(i)), 0.0, 1.0);
    }
    return model;
}

std::vector<double> outcome(const RctDataset& ds, bool baseline_diff) {
    std::vector<double> y(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) y[i] = ds.y_treat(i) - (baseline_diff ? ds.y_base(i) : 0.0);
    return y;
}

TestData make_test_data(const RctDataset& ds, const CondMeanModel& model, std::uint64_t seed) {
    if (model.fitted().size() != ds.size()) throw DataError("model was fitted on a different dataset");
    PerArm<std::vector<double>> pool;
    for (std::size_t i = 0; i < ds.size(); ++i) pool[index(ds.arm(i))].push_back(model.residuals()[i]);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TestData out;
    out.y.resize(ds.size());
    out.z.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Arm d = ds.arm(i);
        const auto& p = pool[index(d)];
        std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
        out.y[i] = model.fitted()[i] + p[pick(rng)];
        if (d == Arm::O)
            out.z[i] = unif(rng) < model.fitted_takeup()[i] ? Choice::T : Choice::NT;
        else
            out.z[i] = d == Arm::T ? Choice::T : Choice::NT;
    }
    return out;
}

std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep) {
    return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(rep));
}

std::vector<CorrectedEstimate> corrected_contrasts(const RctDataset& ds, std::span<const Contrast> contrasts,
                                                   const WelfareParams& params, const CorrectionOptions& opts) {
    if (opts.n_reps == 0) throw ConfigError("n_reps must be at least 1");
    for (const auto& c : contrasts)
        if (c.a == nullptr) throw ConfigError("contrast without a policy");
    const auto props = sample_propensities(ds);
    const auto y = outcome(ds, opts.baseline_diff);
    const auto model = fit_cond_means(ds, y, opts.model);
    const std::size_t nc = contrasts.size();
    const double n = static_cast<double>(ds.size());

    // per replication, per contrast: value and IPW variance of the value
    std::vector<double> value(opts.n_reps * nc), var(opts.n_reps * nc);
    parallel_for(opts.n_reps, opts.threads, [&](std::size_t r) {
        const auto test = make_test_data(ds, model, replication_seed(opts.seed, r));
        WelfareOutcome w;
        w.w = welfare_from_outcome(test.y, test.z, params, opts.demean);
        w.demeaned = opts.demean;
        w.baseline_differenced = opts.baseline_diff;
        for (std::size_t c = 0; c < nc; ++c) {
            auto s = ipw_scores(w, ds, *contrasts[c].a, props);
            if (contrasts[c].b != nullptr) {
                const auto sb = ipw_scores(w, ds, *contrasts[c].b, props);
                for (std::size_t i = 0; i < s.size(); ++i) s[i] -= sb[i];
            }
            const double sd = sample_sd(s);
            value[r * nc + c] = ewm::mean(s);
            var[r * nc + c] = sd * sd / n;
        }
    });

    std::vector<CorrectedEstimate> out(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        auto& e = out[c];
        std::vector<double> vals(opts.n_reps), vars(opts.n_reps);
        for (std::size_t r = 0; r < opts.n_reps; ++r) {
            vals[r] = value[r * nc + c];
            vars[r] = var[r * nc + c];
            e.rep_seeds.push_back(replication_seed(opts.seed, r));
        }
        const double between_sd = sample_sd(vals);
        e.within_var = ewm::mean(vars);
        e.between_var = between_sd * between_sd;
        e.estimate = {ewm::mean(vals), std::sqrt(e.within_var + e.between_var)};
        e.rep_values = std::move(vals);
    }
    return out;
}

CorrectedEstimate corrected_estimate(const RctDataset& ds, const AssignmentPolicy& policy,
                                     const WelfareParams& params, const CorrectionOptions& opts) {
    const Contrast c{&policy, nullptr};
    return corrected_contrasts(ds, std::span(&c, 1), params, opts).front();
}

CorrectedEstimate corrected_gain(const RctDataset& ds, const AssignmentPolicy& a, const AssignmentPolicy& b,
                                 const WelfareParams& params, const CorrectionOptions& opts) {
    const Contrast c{&a, &b};
    return corrected_contrasts(ds, std::span(&c, 1), params, opts).front();
}

std::string replication_log_csv(const CorrectedEstimate& est) {
    std::string out = "rep,seed,welfare\n";
    for (std::size_t r = 0; r < est.rep_values.size(); ++r)
        out += std::to_string(r) + "," + std::to_string(est.rep_seeds[r]) + "," + format_double(est.rep_values[r]) +
               "\n";
    return out;
}

void write_replication_log(const CorrectedEstimate& est, const std::filesystem::path& path) {
    csv::write_file(path, replication_log_csv(est));
}

} // namespace ewm
