#include "ewm/dataset.hpp"

#include "ewm/csv.hpp"
#include "ewm/errors.hpp"

#include <charconv>
#include <cmath>
#include <set>

namespace ewm {

namespace {

const std::vector<std::string> kRequired{"id", "arm", "choice", "y_treat", "y_base"};

void validate(const Household& h, std::size_t dim) {
    auto fail = [&](const std::string& what) {
        throw DataError("row '" + h.id + "': " + what);
    };
    if (h.x.size() != dim)
        fail("covariate dimension " + std::to_string(h.x.size()) + " != schema size " +
             std::to_string(dim));
    for (double v : h.x)
        if (!std::isfinite(v)) fail("non-finite covariate");
    if (!std::isfinite(h.y_treat) || h.y_treat < 0.0) fail("y_treat must be finite and >= 0");
    if (!std::isfinite(h.y_base) || h.y_base < 0.0) fail("y_base must be finite and >= 0");
    if (h.arm == Arm::T && h.choice != Choice::T) fail("arm T requires choice T");
    if (h.arm == Arm::NT && h.choice != Choice::NT) fail("arm NT requires choice NT");
}

} // namespace

RctDataset::RctDataset(std::vector<std::string> schema, std::vector<Household> rows)
    : schema_(std::move(schema)) {
    std::set<std::string> seen;
    for (const auto& name : schema_)
        if (!seen.insert(name).second) throw DataError("duplicate covariate '" + name + "'");
    const std::size_t k = schema_.size();
    ids_.reserve(rows.size());
    covariates_.reserve(rows.size() * k);
    for (auto& h : rows) {
        validate(h, k);
        ids_.push_back(std::move(h.id));
        covariates_.insert(covariates_.end(), h.x.begin(), h.x.end());
        arms_.push_back(h.arm);
        choices_.push_back(h.choice);
        y_treat_.push_back(h.y_treat);
        y_base_.push_back(h.y_base);
        ++arm_counts_[index(h.arm)];
    }
}

Household RctDataset::row(std::size_t i) const {
    auto xi = x(i);
    return Household{ids_[i], {xi.begin(), xi.end()}, arms_[i], choices_[i], y_treat_[i], y_base_[i]};
}

std::size_t RctDataset::covariate_index(const std::string& name) const {
    for (std::size_t k = 0; k < schema_.size(); ++k)
        if (schema_[k] == name) return k;
    throw DataError("unknown covariate '" + name + "'");
}

RctDataset RctDataset::subset(std::span<const std::size_t> rows) const {
    std::vector<Household> out;
    out.reserve(rows.size());
    for (auto i : rows) out.push_back(row(i));
    return RctDataset(schema_, std::move(out));
}

LoadResult parse_csv(std::string_view text, const std::vector<std::string>& schema) {
    const auto table = csv::parse(text);
    if (table.rows.empty()) throw DataError("empty file: no data rows");

    auto require = [&](const std::string& name) {
        auto c = table.column(name);
        if (!c) throw DataError("missing column '" + name + "'");
        return *c;
    };
    const auto c_id = require("id");
    const auto c_arm = require("arm");
    const auto c_choice = require("choice");
    const auto c_ytreat = require("y_treat");
    const auto c_ybase = require("y_base");
    std::vector<std::size_t> c_cov;
    for (const auto& name : schema) c_cov.push_back(require(name));

    LoadResult result;
    std::set<std::string> known(kRequired.begin(), kRequired.end());
    known.insert(schema.begin(), schema.end());
    for (const auto& h : table.header)
        if (!known.count(h)) result.warnings.push_back("ignoring extra column '" + h + "'");

    std::vector<Household> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        Household h;
        h.id = f[c_id];
        const std::string where =
            "row '" + h.id + "' (line " + std::to_string(table.line_numbers[r]) + ")";
        if (h.id.empty()) throw DataError(where + ": missing id");
        auto number = [&](std::size_t col) {
            if (f[col].empty())
                throw DataError(where + ": missing value in column '" + table.header[col] + "'");
            auto v = csv::to_double(f[col]);
            if (!v)
                throw DataError(where + ": cannot parse '" + f[col] + "' in column '" +
                                table.header[col] + "'");
            return *v;
        };
        auto arm = parse_arm(f[c_arm]);
        if (!arm) throw DataError(where + ": bad arm token '" + f[c_arm] + "'");
        auto choice = parse_choice(f[c_choice]);
        if (!choice) throw DataError(where + ": bad choice token '" + f[c_choice] + "'");
        h.arm = *arm;
        h.choice = *choice;
        h.y_treat = number(c_ytreat);
        h.y_base = number(c_ybase);
        h.x.reserve(c_cov.size());
        for (auto c : c_cov) h.x.push_back(number(c));
        rows.push_back(std::move(h));
    }
    result.data = RctDataset(schema, std::move(rows));
    return result;
}

LoadResult load_csv(const std::filesystem::path& path, const std::vector<std::string>& schema) {
    return parse_csv(csv::read_file(path), schema);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string to_csv(const RctDataset& ds) {
    std::string out = "id,arm,choice,y_treat,y_base";
    for (const auto& name : ds.schema()) out += "," + csv::escape(name);
    out += "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += csv::escape(ds.id(i));
        out += ",";
        out += to_string(ds.arm(i));
        out += ",";
        out += to_string(ds.choice(i));
        out += "," + format_double(ds.y_treat(i)) + "," + format_double(ds.y_base(i));
        for (double v : ds.x(i)) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

void write_csv(const RctDataset& ds, const std::filesystem::path& path) {
    csv::write_file(path, to_csv(ds));
}

PerArm<double> sample_propensities(const RctDataset& ds) {
    if (ds.empty()) throw NumericError("propensities of an empty dataset");
    PerArm<double> p{};
    const auto n = static_cast<double>(ds.size());
    for (Arm a : kAllArms) {
        const auto nj = ds.arm_counts()[index(a)];
        if (nj == 0)
            throw NumericError("arm " + std::string(to_string(a)) + " has no rows");
        p[index(a)] = static_cast<double>(nj) / n;
    }
    return p;
}

} // namespace ewm
