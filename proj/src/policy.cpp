#include "ewm/policy.hpp"

#include "ewm/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace ewm {

using nlohmann::json;

namespace {

// Re-lays nodes out in preorder from `root`, checking that the structure is a tree.
std::vector<TreeNode> canonical(const std::vector<TreeNode>& nodes, std::size_t dim, int& depth) {
    if (nodes.empty()) throw DataError("tree has no nodes");
    std::vector<char> seen(nodes.size(), 0);
    std::vector<TreeNode> out;
    out.reserve(nodes.size());
    depth = 0;
    std::function<int(int, int)> visit = [&](int idx, int level) -> int {
        if (idx < 0 || static_cast<std::size_t>(idx) >= nodes.size())
            throw DataError("tree child index out of range");
        if (seen[idx]) throw DataError("tree node reachable more than once");
        seen[idx] = 1;
        if (level > kMaxTreeDepth)
            throw DataError("tree depth exceeds " + std::to_string(kMaxTreeDepth));
        depth = std::max(depth, level);
        const TreeNode& n = nodes[idx];
        const int me = static_cast<int>(out.size());
        out.push_back(n);
        if (n.is_leaf()) {
            out[me].var = -1;
            out[me].threshold = 0.0;
            out[me].true_child = out[me].false_child = -1;
            return me;
        }
        if (static_cast<std::size_t>(n.var) >= dim)
            throw DataError("split variable " + std::to_string(n.var) + " out of range");
        if (!std::isfinite(n.threshold)) throw DataError("split threshold must be finite");
        const int t = visit(n.true_child, level + 1);
        const int f = visit(n.false_child, level + 1);
        out[me].true_child = t;
        out[me].false_child = f;
        return me;
    };
    visit(0, 0);
    if (out.size() != nodes.size()) throw DataError("tree has unreachable nodes");
    return out;
}

void append(std::vector<TreeNode>& dst, const std::vector<TreeNode>& src) {
    const int offset = static_cast<int>(dst.size());
    for (TreeNode n : src) {
        if (!n.is_leaf()) {
            n.true_child += offset;
            n.false_child += offset;
        }
        dst.push_back(n);
    }
}

json node_to_json(const std::vector<TreeNode>& nodes, int idx) {
    const auto& n = nodes[idx];
    if (n.is_leaf()) return json{{"leaf", std::string(to_string(n.arm))}};
    json split;
    split["var"] = n.var;
    split["ge"] = n.threshold;
    split["true"] = node_to_json(nodes, n.true_child);
    split["false"] = node_to_json(nodes, n.false_child);
    return json{{"split", split}};
}

int node_from_json(const json& j, std::vector<TreeNode>& nodes, int level) {
    if (level > kMaxTreeDepth)
        throw DataError("tree depth exceeds " + std::to_string(kMaxTreeDepth));
    if (!j.is_object() || j.size() != 1) throw DataError("tree node must be an object with one key");
    const int me = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (j.contains("leaf")) {
        const auto& tok = j.at("leaf");
        if (!tok.is_string()) throw DataError("leaf arm must be a string");
        auto arm = parse_arm(tok.get<std::string>());
        if (!arm) throw DataError("unknown arm token '" + tok.get<std::string>() + "'");
        nodes[me].arm = *arm;
        return me;
    }
    if (!j.contains("split")) throw DataError("tree node must be 'leaf' or 'split'");
    const auto& s = j.at("split");
    if (!s.is_object()) throw DataError("split must be an object");
    for (const char* key : {"var", "ge", "true", "false"})
        if (!s.contains(key)) throw DataError(std::string("split is missing '") + key + "'");
    if (!s.at("var").is_number_integer() || s.at("var").get<long long>() < 0)
        throw DataError("split 'var' must be a non-negative integer");
    if (!s.at("ge").is_number()) throw DataError("split 'ge' must be a finite number");
    const double t = s.at("ge").get<double>();
    if (!std::isfinite(t)) throw DataError("split 'ge' must be a finite number");
    nodes[me].var = static_cast<int>(s.at("var").get<long long>());
    nodes[me].threshold = t;
    const int tc = node_from_json(s.at("true"), nodes, level + 1);
    const int fc = node_from_json(s.at("false"), nodes, level + 1);
    nodes[me].true_child = tc;
    nodes[me].false_child = fc;
    return me;
}

std::string fmt_threshold(double t) {
    std::ostringstream ss;
    ss.precision(6);
    ss << t;
    return ss.str();
}

} // namespace

DecisionTree::DecisionTree(std::vector<std::string> covariates, Arm leaf_arm)
    : covariates_(std::move(covariates)) {
    TreeNode leaf;
    leaf.arm = leaf_arm;
    nodes_.push_back(leaf);
}

DecisionTree::DecisionTree(std::vector<std::string> covariates, std::vector<TreeNode> nodes)
    : covariates_(std::move(covariates)) {
    nodes_ = canonical(nodes, covariates_.size(), depth_);
}

DecisionTree DecisionTree::split(std::vector<std::string> covariates, std::size_t var,
                                 double threshold, const DecisionTree& when_true,
                                 const DecisionTree& when_false) {
    std::vector<TreeNode> nodes(1);
    nodes[0].var = static_cast<int>(var);
    nodes[0].threshold = threshold;
    nodes[0].true_child = 1;
    append(nodes, when_true.nodes_);
    nodes[0].false_child = static_cast<int>(nodes.size());
    append(nodes, when_false.nodes_);
    return DecisionTree(std::move(covariates), std::move(nodes));
}

std::size_t DecisionTree::leaf_of(std::span<const double> x) const {
    if (x.size() != covariates_.size())
        throw DataError("covariate vector has dimension " + std::to_string(x.size()) +
                        ", tree expects " + std::to_string(covariates_.size()));
    std::size_t idx = 0;
    while (!nodes_[idx].is_leaf()) {
        const auto& n = nodes_[idx];
        idx = static_cast<std::size_t>(x[n.var] >= n.threshold ? n.true_child : n.false_child);
    }
    return idx;
}

Arm DecisionTree::assign(std::span<const double> x) const { return nodes_[leaf_of(x)].arm; }

std::size_t DecisionTree::num_leaves() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

DecisionTree DecisionTree::pruned() const {
    std::vector<TreeNode> out;
    std::function<int(int)> visit = [&](int idx) -> int {
        const auto& n = nodes_[idx];
        const int me = static_cast<int>(out.size());
        out.push_back(n);
        if (n.is_leaf()) return me;
        const int t = visit(n.true_child);
        const int f = visit(n.false_child);
        if (out[t].is_leaf() && out[f].is_leaf() && out[t].arm == out[f].arm) {
            const Arm a = out[t].arm;
            out.resize(me + 1);
            out[me] = TreeNode{};
            out[me].arm = a;
        } else {
            out[me].true_child = t;
            out[me].false_child = f;
        }
        return me;
    };
    visit(0);
    return DecisionTree(covariates_, std::move(out));
}

DecisionTree DecisionTree::relabeled(Arm a, Arm b) const {
    auto nodes = nodes_;
    for (auto& n : nodes) {
        if (!n.is_leaf()) continue;
        if (n.arm == a) n.arm = b;
        else if (n.arm == b) n.arm = a;
    }
    return DecisionTree(covariates_, std::move(nodes));
}

AssignmentPolicy::AssignmentPolicy(DecisionTree tree) : kind_(std::move(tree)) {}

Arm AssignmentPolicy::assign(std::span<const double> x) const {
    if (auto* a = std::get_if<Arm>(&kind_)) return *a;
    return std::get<DecisionTree>(kind_).assign(x);
}

std::vector<Arm> AssignmentPolicy::assign_all(const RctDataset& ds) const {
    std::vector<Arm> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = assign(ds.x(i));
    return out;
}

std::vector<Arm> AssignmentPolicy::arms_used() const {
    if (is_uniform()) return {uniform_arm()};
    std::vector<Arm> out;
    for (const auto& n : tree().nodes())
        if (n.is_leaf() && std::find(out.begin(), out.end(), n.arm) == out.end()) out.push_back(n.arm);
    std::sort(out.begin(), out.end());
    return out;
}

DecisionTree AssignmentPolicy::as_tree(const std::vector<std::string>& covariates) const {
    if (is_uniform()) return DecisionTree(covariates, uniform_arm());
    return tree();
}

PerArm<double> shares(const AssignmentPolicy& policy, const RctDataset& ds) {
    PerArm<double> s{};
    if (ds.empty()) return s;
    for (std::size_t i = 0; i < ds.size(); ++i) s[index(policy.assign(ds.x(i)))] += 1.0;
    for (auto& v : s) v /= static_cast<double>(ds.size());
    return s;
}

std::string format_shares(const PerArm<double>& s) {
    std::string out;
    for (Arm a : {Arm::T, Arm::NT, Arm::O}) {
        const double v = s[index(a)];
        if (v <= 0.0) continue;
        if (!out.empty()) out += ", ";
        out += std::to_string(static_cast<long long>(std::llround(100.0 * v))) + "% " +
               std::string(to_string(a));
    }
    return out;
}

std::string tree_to_json(const DecisionTree& tree) {
    json doc;
    doc["covariates"] = tree.covariates();
    doc["root"] = node_to_json(tree.nodes(), 0);
    return doc.dump(2);
}

std::string policy_to_json(const AssignmentPolicy& policy) {
    return tree_to_json(policy.as_tree());
}

DecisionTree tree_from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed tree document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("root"))
        throw DataError("tree document must be an object with a 'root'");
    std::vector<std::string> covariates;
    if (doc.contains("covariates")) {
        const auto& c = doc.at("covariates");
        if (!c.is_array()) throw DataError("'covariates' must be an array of names");
        for (const auto& name : c) {
            if (!name.is_string()) throw DataError("'covariates' must be an array of names");
            covariates.push_back(name.get<std::string>());
        }
    }
    std::vector<TreeNode> nodes;
    node_from_json(doc.at("root"), nodes, 0);
    return DecisionTree(std::move(covariates), std::move(nodes));
}

AssignmentPolicy policy_from_json(std::string_view text) {
    auto tree = tree_from_json(text);
    if (tree.is_leaf_only()) return AssignmentPolicy::uniform(tree.nodes().front().arm);
    return AssignmentPolicy(std::move(tree));
}

std::string render_text(const DecisionTree& tree) {
    std::ostringstream out;
    const auto& nodes = tree.nodes();
    auto name = [&](int var) {
        return static_cast<std::size_t>(var) < tree.covariates().size()
                   ? tree.covariates()[var]
                   : "x" + std::to_string(var + 1);
    };
    std::function<void(int, long long, int, const std::string&)> visit =
        [&](int idx, long long heap, int level, const std::string& edge) {
            const auto& n = nodes[idx];
            out << std::string(static_cast<std::size_t>(level) * 4, ' ') << edge << "(" << heap
                << ") ";
            if (n.is_leaf()) {
                out << to_string(n.arm) << "\n";
                return;
            }
            out << name(n.var) << " >= " << fmt_threshold(n.threshold) << "\n";
            visit(n.true_child, 2 * heap, level + 1, "True: ");
            visit(n.false_child, 2 * heap + 1, level + 1, "False: ");
        };
    visit(0, 1, 0, "");
    return out.str();
}

std::string render_dot(const DecisionTree& tree) {
    std::ostringstream out;
    out << "digraph policy {\n  node [shape=box, style=rounded];\n";
    const auto& nodes = tree.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        out << "  n" << i << " [label=\"";
        if (n.is_leaf()) {
            out << to_string(n.arm);
        } else {
            const auto& cov = tree.covariates();
            out << (static_cast<std::size_t>(n.var) < cov.size() ? cov[n.var]
                                                                 : "x" + std::to_string(n.var + 1))
                << " >= " << fmt_threshold(n.threshold);
        }
        out << "\"];\n";
        if (!n.is_leaf()) {
            out << "  n" << i << " -> n" << n.true_child << " [label=\"True\"];\n";
            out << "  n" << i << " -> n" << n.false_child << " [label=\"False\"];\n";
        }
    }
    out << "}\n";
    return out.str();
}

} // namespace ewm
