#pragma once

#include "ewm/arm.hpp"
#include "ewm/dataset.hpp"
#include "ewm/policy.hpp"
#include "ewm/welfare.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ewm {

using Region = std::function<bool(std::span<const double>)>;

// Every covariate vector.
Region whole_space();

// Rows of ds falling in the region.
std::vector<std::size_t> rows_in(const RctDataset& ds, const Region& region);

/// Share of opt-in-arm rows choosing T, with binomial standard error.
/// Throws DataError when the region holds no opt-in rows.
Estimate take_up_rate(const RctDataset& ds, const Region& region);
Estimate take_up_rate(const RctDataset& ds, std::span<const std::size_t> rows);

struct SubgroupEffects {
    std::string label;
    PerArm<std::size_t> n{};
    PerArm<double> arm_mean{};
    Estimate takeup;
    Estimate ate;
    Estimate itt;
    // Empty when take-up is 0 (takers) or 1 (non-takers).
    std::optional<Estimate> late_takers;
    std::optional<Estimate> late_nontakers;
};

/// Arm-mean contrasts of w within a region. SEs by the delta method; arms are
/// independent by randomization, but the opt-in mean and the take-up rate
/// come from the same rows, so their covariance is kept.
/// Throws DataError when some arm has no rows in the region.
SubgroupEffects subgroup_effects(const RctDataset& ds, const WelfareOutcome& w,
                                 const Region& region, std::string label = "all");
SubgroupEffects subgroup_effects(const RctDataset& ds, const WelfareOutcome& w,
                                 std::span<const std::size_t> rows, std::string label = "all");

/// Pearson chi-square test that take-up is the same in every group.
struct HomogeneityTest {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
};
// counts[g] = {takers, opt-in rows}; groups with no rows are dropped.
std::optional<HomogeneityTest> takeup_homogeneity(
    std::span<const std::pair<std::size_t, std::size_t>> counts);

/// Mechanism table: one column per arm, region = rows the policy sends there.
struct MechanismColumn {
    Arm arm = Arm::NT;
    std::size_t rows = 0;
    double share = 0.0;
    std::optional<SubgroupEffects> effects;
    std::string note; // why `effects` is missing
};

struct MechanismReport {
    std::vector<MechanismColumn> columns; // NT, T, O
    std::optional<HomogeneityTest> takeup_test;

    std::string to_tsv() const;
    std::string to_json() const;
};

MechanismReport mechanism_report(const RctDataset& ds, const WelfareOutcome& w,
                                 const AssignmentPolicy& policy);

// Row labels of the mechanism table, in print order.
inline const std::array<std::string_view, 5> kMechanismRows{
    "Opt-in rate", "LATE(Z(O)=T)", "LATE(Z(O)=NT)", "ATE", "ITT"};

} // namespace ewm
