#include "ewm/panel.hpp"

#include "ewm/csv.hpp"
#include "ewm/dataset.hpp"
#include "ewm/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <set>
#include <unordered_map>

namespace ewm {

namespace {

std::vector<PanelObservation> from_table(const csv::Table& table) {
    std::size_t cols[4];
    const char* names[4] = {"household", "interval", "log_y", "arm"};
    for (int c = 0; c < 4; ++c) {
        const auto idx = table.column(names[c]);
        if (!idx) throw DataError(std::string("panel file lacks column '") + names[c] + "'");
        cols[c] = *idx;
    }
    std::vector<PanelObservation> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = "panel line " + std::to_string(table.line_numbers[r]);
        PanelObservation obs;
        obs.household = row[cols[0]];
        obs.interval = row[cols[1]];
        if (obs.household.empty() || obs.interval.empty()) throw DataError(where + ": empty id");
        const auto y = csv::to_double(row[cols[2]]);
        if (!y || !std::isfinite(*y)) throw DataError(where + ": bad log_y '" + row[cols[2]] + "'");
        obs.log_y = *y;
        const auto arm = parse_arm(row[cols[3]]);
        if (!arm) throw DataError(where + ": bad arm '" + row[cols[3]] + "'");
        obs.arm = *arm;
        out.push_back(std::move(obs));
    }
    return out;
}

// Dense ids in order of first appearance.
std::vector<std::size_t> encode(const std::vector<PanelObservation>& panel,
                                const std::string PanelObservation::*field, std::size_t& count) {
    std::unordered_map<std::string, std::size_t> ids;
    std::vector<std::size_t> out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i)
        out[i] = ids.try_emplace(panel[i].*field, ids.size()).first->second;
    count = ids.size();
    return out;
}

} // namespace

std::vector<PanelObservation> parse_panel_csv(std::string_view text) { return from_table(csv::parse(text)); }

std::vector<PanelObservation> load_panel_csv(const std::filesystem::path& path) {
    return from_table(csv::read(path));
}

std::string panel_to_csv(const std::vector<PanelObservation>& panel) {
    std::string out = "household,interval,log_y,arm\n";
    for (const auto& o : panel) {
        out += csv::escape(o.household) + ',' + csv::escape(o.interval) + ',' + format_double(o.log_y) +
               ',' + std::string(to_string(o.arm)) + '\n';
    }
    return out;
}

PanelItt panel_itt(const std::vector<PanelObservation>& panel) {
    PanelItt res;
    const std::size_t n = panel.size();
    std::size_t h_count = 0, t_count = 0;
    const auto hh = encode(panel, &PanelObservation::household, h_count);
    const auto tt = encode(panel, &PanelObservation::interval, t_count);
    res.observations = n;
    res.households = h_count;
    res.intervals = t_count;
    if (t_count < 2) throw DataError("panel needs at least two intervals");

    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::size_t> per_h(h_count, 0);
    std::vector<char> ever_t(h_count, 0), ever_o(h_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(panel[i].log_y)) throw DataError("non-finite log_y for " + panel[i].household);
        if (!seen.emplace(hh[i], tt[i]).second)
            throw DataError("duplicate observation for household " + panel[i].household + " interval " +
                            panel[i].interval);
        ++per_h[hh[i]];
        if (panel[i].arm == Arm::T) ever_t[hh[i]] = 1;
        if (panel[i].arm == Arm::O) ever_o[hh[i]] = 1;
    }
    const auto count = [](const std::vector<char>& v) { return std::count(v.begin(), v.end(), 1); };
    if (count(ever_t) < 2 || count(ever_o) < 2)
        throw DataError("panel needs at least two households exposed to each of T and O");
    const auto singletons = std::count(per_h.begin(), per_h.end(), 1u);
    if (singletons > 0)
        res.warnings.push_back(std::to_string(singletons) + " household(s) observed in a single interval");
    res.balanced = (n == h_count * t_count);

    // Regressors after removing household effects (and interval effects when balanced).
    const std::size_t extra = res.balanced ? 0 : t_count - 1;
    const std::size_t p = 2 + extra;
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        y(r) = panel[i].log_y;
        X(r, 0) = panel[i].arm == Arm::T ? 1.0 : 0.0;
        X(r, 1) = panel[i].arm == Arm::O ? 1.0 : 0.0;
        if (!res.balanced && tt[i] > 0) X(r, static_cast<Eigen::Index>(1 + tt[i])) = 1.0;
    }

    // column means by group
    auto group_demean = [&](Eigen::MatrixXd& M, const std::vector<std::size_t>& g, std::size_t groups) {
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups), M.cols());
        std::vector<double> cnt(groups, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(static_cast<Eigen::Index>(g[i])) += M.row(static_cast<Eigen::Index>(i));
            cnt[g[i]] += 1.0;
        }
        for (std::size_t i = 0; i < n; ++i)
            M.row(static_cast<Eigen::Index>(i)) -=
                sums.row(static_cast<Eigen::Index>(g[i])) / cnt[g[i]];
    };

    Eigen::MatrixXd Y = y;
    if (res.balanced) {
        // one-pass two-way within transformation
        Eigen::MatrixXd all(static_cast<Eigen::Index>(n), 3);
        all << y, X;
        const Eigen::RowVectorXd grand = all.colwise().mean();
        Eigen::MatrixXd by_h = all, by_t = all;
        group_demean(by_h, hh, h_count); // all - hbar
        group_demean(by_t, tt, t_count); // all - tbar
        // all - hbar - tbar + grand = by_h + by_t - all + grand
        Eigen::MatrixXd tw = by_h + by_t - all;
        tw.rowwise() += grand;
        Y = tw.col(0);
        X = tw.rightCols(2);
    } else {
        group_demean(Y, hh, h_count);
        group_demean(X, hh, h_count);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(p))
        throw NumericError("treatment indicators are collinear with the fixed effects");
    const Eigen::VectorXd beta = qr.solve(Y.col(0));
    const Eigen::VectorXd u = Y.col(0) - X * beta;

    const Eigen::MatrixXd bread = (X.transpose() * X).inverse();
    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(h_count),
                                                   static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < n; ++i)
        scores.row(static_cast<Eigen::Index>(hh[i])) += X.row(static_cast<Eigen::Index>(i)) * u(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd meat = scores.transpose() * scores;
    const double g = static_cast<double>(h_count);
    const double k = static_cast<double>(2 + t_count - 1);
    const double nn = static_cast<double>(n);
    const double dof = (g / (g - 1.0)) * ((nn - 1.0) / std::max(nn - k, 1.0));
    const Eigen::MatrixXd V = dof * bread * meat * bread;

    res.tau_T = {beta(0), std::sqrt(std::max(V(0, 0), 0.0))};
    res.tau_O = {beta(1), std::sqrt(std::max(V(1, 1), 0.0))};
    return res;
}

} // namespace ewm
