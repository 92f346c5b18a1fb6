#pragma once

// Budget ledger: every epsilon spent by a mechanism is appended here with
// the tree scope it touched. The ledger verifies, rather than enforces,
// sequential composition: a post-run audit checks that the worst
// root-to-leaf path sum stays within the total budget.
//
// Scope keys: "global" for dataset-wide stages (height, length histogram);
// "/c:s/c:s/..." for tree nodes, built from root-to-node labels.

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "aptb/dp.hpp"
#include "aptb/prefix_tree.hpp"

namespace aptb {

enum class Purpose { rank, select, count, pre_length, pre_histogram };

inline const char* to_string(Purpose p) {
    switch (p) {
        case Purpose::rank: return "rank";
        case Purpose::select: return "select";
        case Purpose::count: return "count";
        case Purpose::pre_length: return "pre-length";
        case Purpose::pre_histogram: return "pre-histogram";
    }
    return "?";
}

inline constexpr const char* kGlobalScope = "global";

inline std::string node_scope(const std::string& parent_scope, const STPoint& label) {
    return parent_scope + "/" + std::to_string(label.cell) + ":" +
           std::to_string(label.slot);
}

struct Charge {
    std::string scope;
    double epsilon;
    Purpose purpose;
};

class BudgetLedger {
public:
    void charge(std::string scope, Epsilon eps, Purpose purpose) {
        charges_.push_back(Charge{std::move(scope), eps.value, purpose});
    }

    const std::vector<Charge>& charges() const { return charges_; }
    std::size_t size() const { return charges_.size(); }

    /// One charge per line: scope<TAB>purpose<TAB>epsilon.
    void write(std::ostream& os) const {
        char buf[32];
        for (const auto& c : charges_) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), c.epsilon);
            os << c.scope << '\t' << to_string(c.purpose) << '\t';
            os.write(buf, ptr - buf);
            os << '\n';
        }
    }

private:
    std::vector<Charge> charges_;
};

struct LedgerMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompositionReport {
    bool pass = false;
    double total = 0;         // budget the audit ran against
    double global_sum = 0;    // sum of global-stage charges
    double max_path_sum = 0;  // worst root-to-leaf path, global included
    std::string max_path;     // scope of the leaf ending the worst path
    std::size_t paths_checked = 0;
};

namespace detail {

inline void audit_walk(const TreeNode& n, const std::string& scope, double sum,
                       const std::unordered_map<std::string, double>& per_scope,
                       CompositionReport& report) {
    if (n.depth > 0) {
        auto it = per_scope.find(scope);
        if (it != per_scope.end()) sum += it->second;
    }
    if (n.children.empty()) {
        ++report.paths_checked;
        if (sum > report.max_path_sum) {
            report.max_path_sum = sum;
            report.max_path = n.depth == 0 ? std::string(kGlobalScope) : scope;
        }
        return;
    }
    for (const auto& c : n.children)
        audit_walk(c, node_scope(scope, c.label), sum, per_scope, report);
}

} // namespace detail

/// For every root-to-leaf path: (global charges) + (per-node charges along
/// the path) must stay within total + 1e-9. Throws LedgerMismatchError when
/// a node scope does not name a tree node.
inline CompositionReport verify_composition(const BudgetLedger& ledger,
                                            const PrefixTree& tree, Epsilon total) {
    std::unordered_map<std::string, double> per_scope;
    double global_sum = 0;
    for (const auto& c : ledger.charges()) {
        if (c.scope == kGlobalScope) {
            global_sum += c.epsilon;
        } else {
            per_scope[c.scope] += c.epsilon;
        }
    }

    std::unordered_set<std::string> tree_scopes;
    {
        // collect scopes iteratively to mirror audit_walk's naming
        struct Frame { const TreeNode* n; std::string scope; };
        std::vector<Frame> stack{{&tree.root, ""}};
        while (!stack.empty()) {
            Frame f = std::move(stack.back());
            stack.pop_back();
            if (f.n->depth > 0) tree_scopes.insert(f.scope);
            for (const auto& c : f.n->children)
                stack.push_back({&c, node_scope(f.scope, c.label)});
        }
    }
    for (const auto& [scope, eps] : per_scope)
        if (!tree_scopes.count(scope))
            throw LedgerMismatchError("ledger scope '" + scope + "' names no tree node");

    CompositionReport report;
    report.total = total.value;
    report.global_sum = global_sum;
    report.max_path_sum = global_sum;
    report.max_path = kGlobalScope;
    detail::audit_walk(tree.root, "", global_sum, per_scope, report);
    report.pass = report.max_path_sum <= total.value + 1e-9;
    return report;
}

} // namespace aptb
