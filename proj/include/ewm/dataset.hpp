#pragma once

#include "ewm/arm.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ewm {

struct Household {
    std::string id;
    std::vector<double> x;
    Arm arm = Arm::NT;
    Choice choice = Choice::NT;
    double y_treat = 0.0; // kWh, mean treatment-period peak consumption
    double y_base = 0.0;  // kWh, mean baseline-period peak consumption
};

/// Immutable three-arm RCT sample. Covariates are stored row-major.
class RctDataset {
public:
    RctDataset() = default;

    // Validates every row; throws DataError naming the offending row id.
    RctDataset(std::vector<std::string> schema, std::vector<Household> rows);

    std::size_t size() const noexcept { return arms_.size(); }
    std::size_t dim() const noexcept { return schema_.size(); }
    bool empty() const noexcept { return arms_.empty(); }

    const std::vector<std::string>& schema() const noexcept { return schema_; }
    std::span<const double> x(std::size_t i) const noexcept {
        return {covariates_.data() + i * dim(), dim()};
    }
    double x(std::size_t i, std::size_t k) const noexcept { return covariates_[i * dim() + k]; }
    const std::string& id(std::size_t i) const noexcept { return ids_[i]; }
    Arm arm(std::size_t i) const noexcept { return arms_[i]; }
    Choice choice(std::size_t i) const noexcept { return choices_[i]; }
    double y_treat(std::size_t i) const noexcept { return y_treat_[i]; }
    double y_base(std::size_t i) const noexcept { return y_base_[i]; }

    const std::vector<Arm>& arms() const noexcept { return arms_; }
    const std::vector<Choice>& choices() const noexcept { return choices_; }
    const PerArm<std::size_t>& arm_counts() const noexcept { return arm_counts_; }

    Household row(std::size_t i) const;

    // Index of a covariate in the schema; throws DataError when absent.
    std::size_t covariate_index(const std::string& name) const;

    // Rows selected by index, in the given order.
    RctDataset subset(std::span<const std::size_t> rows) const;

    friend bool operator==(const RctDataset&, const RctDataset&) = default;

private:
    std::vector<std::string> schema_;
    std::vector<std::string> ids_;
    std::vector<double> covariates_;
    std::vector<Arm> arms_;
    std::vector<Choice> choices_;
    std::vector<double> y_treat_;
    std::vector<double> y_base_;
    PerArm<std::size_t> arm_counts_{};
};

struct LoadResult {
    RctDataset data;
    std::vector<std::string> warnings;
};

/// Reads `id,arm,choice,y_treat,y_base,<covariates...>`. Columns may appear in
/// any order; covariates are reordered to `schema`. Extra columns produce a
/// warning. Throws DataError on any missing column, empty field, bad token or
/// invariant violation.
LoadResult load_csv(const std::filesystem::path& path, const std::vector<std::string>& schema);
LoadResult parse_csv(std::string_view text, const std::vector<std::string>& schema);

void write_csv(const RctDataset& ds, const std::filesystem::path& path);
std::string to_csv(const RctDataset& ds);

/// p_j = n_j / n for each arm. Throws NumericError when any arm is empty.
PerArm<double> sample_propensities(const RctDataset& ds);

// Shortest round-trip decimal representation.
std::string format_double(double v);

} // namespace ewm
