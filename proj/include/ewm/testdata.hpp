#pragma once

#include "ewm/arm.hpp"
#include "ewm/dataset.hpp"
#include "ewm/policy.hpp"
#include "ewm/welfare.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ewm {

enum class CondMeanMethod { Knn, Tree };

struct CondMeanConfig {
    CondMeanMethod method = CondMeanMethod::Knn;
    std::size_t k = 0;        // knn neighbours; 0 picks ceil(n_j^0.7) per arm
    std::size_t min_leaf = 20; // tree
    int max_depth = 6;         // tree
    bool honest = true;        // tree: leaf means from the half not used for splits
};

CondMeanMethod parse_cond_mean_method(std::string_view token);

/// Fitted per-arm conditional means of an outcome and the opt-in take-up
/// probability. Keeps the in-sample fit and residual of every training row.
class CondMeanModel {
public:
    // Predictions at an arbitrary x.
    double mean(Arm arm, std::span<const double> x) const;
    double takeup(std::span<const double> x) const;

    // In-sample values for training row i (its own arm).
    const std::vector<double>& fitted() const noexcept { return fitted_; }
    const std::vector<double>& residuals() const noexcept { return residuals_; }
    // Take-up probability at each training row's x.
    const std::vector<double>& fitted_takeup() const noexcept { return fitted_takeup_; }

    const CondMeanConfig& config() const noexcept { return config_; }

    struct Impl;

private:
    friend CondMeanModel fit_cond_means(const RctDataset&, std::span<const double>, const CondMeanConfig&);
    CondMeanConfig config_;
    std::shared_ptr<const Impl> impl_;
    std::vector<double> fitted_;
    std::vector<double> residuals_;
    std::vector<double> fitted_takeup_;
};

/// Throws DataError when an arm is too small for the method (fewer than k
/// rows for knn, fewer than min_leaf for the tree).
CondMeanModel fit_cond_means(const RctDataset& ds, std::span<const double> y, const CondMeanConfig& config = {});

// Outcome used for welfare: y_treat - y_base or y_treat.
std::vector<double> outcome(const RctDataset& ds, bool baseline_diff);

/// Artificial test data: arms and covariates copied, outcomes rebuilt from the
/// fitted means plus residuals resampled within each arm, and opt-in choices
/// drawn from the fitted take-up probability.
struct TestData {
    std::vector<double> y;
    std::vector<Choice> z;
};

TestData make_test_data(const RctDataset& ds, const CondMeanModel& model, std::uint64_t seed);

struct CorrectionOptions {
    std::size_t n_reps = 100;
    std::uint64_t seed = 1;
    bool baseline_diff = true;
    bool demean = false;
    CondMeanConfig model;
    unsigned threads = 1;
};

struct CorrectedEstimate {
    Estimate estimate;         // mean over replications; SE combines both variances
    double within_var = 0.0;   // mean IPW variance of a replication's estimate
    double between_var = 0.0;  // spread of the replication estimates
    std::vector<std::uint64_t> rep_seeds;
    std::vector<double> rep_values;
};

// Seed of replication `rep`; independent streams for every replication.
std::uint64_t replication_seed(std::uint64_t seed, std::size_t rep);

CorrectedEstimate corrected_estimate(const RctDataset& ds, const AssignmentPolicy& policy,
                                     const WelfareParams& params, const CorrectionOptions& opts = {});

// Same replications, scoring W(a) - W(b) row by row.
CorrectedEstimate corrected_gain(const RctDataset& ds, const AssignmentPolicy& a, const AssignmentPolicy& b,
                                 const WelfareParams& params, const CorrectionOptions& opts = {});

// Evaluates several contrasts on one shared set of replications. A null
// baseline means the level W(a).
struct Contrast {
    const AssignmentPolicy* a = nullptr;
    const AssignmentPolicy* b = nullptr;
};
std::vector<CorrectedEstimate> corrected_contrasts(const RctDataset& ds, std::span<const Contrast> contrasts,
                                                   const WelfareParams& params, const CorrectionOptions& opts);

std::string replication_log_csv(const CorrectedEstimate& est);
void write_replication_log(const CorrectedEstimate& est, const std::filesystem::path& path);

} // namespace ewm
