#include "mlgt/folds.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "mlgt/errors.hpp"

namespace mlgt {

bool FoldSpec::is_unseen(const std::string& label) const {
    return std::find(unseen.begin(), unseen.end(), label) != unseen.end();
}

const std::vector<std::string>& rsketch_classes() {
    static const std::vector<std::string> names{
        "airplane",     "baseball diamond", "basketball court", "beach",    "bridge",
        "closed road",  "crosswalk",        "football field",   "golf course", "intersection",
        "oil gas field", "overpass",        "railway",          "river",    "runway",
        "runway marking", "storage tank",   "swimming pool",    "tennis court", "wwtp"};
    return names;
}

std::string canonical_class_name(const std::string& name) {
    std::string s;
    for (char c : name) {
        const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        const char mapped = (l == '_' || l == '-') ? ' ' : l;
        if (mapped == ' ' && (s.empty() || s.back() == ' ')) continue;
        s.push_back(mapped);
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();

    static const std::map<std::string, std::string> aliases{
        {"baseball field", "baseball diamond"},
        {"basketball field", "basketball court"},
        {"wastewater treatment plant", "wwtp"},
        {"wastewater treatment plant (wwtp)", "wwtp"},
        {"oil and gas field", "oil gas field"},
    };
    const auto& known = rsketch_classes();
    auto resolve = [&](const std::string& candidate) -> std::string {
        if (auto it = aliases.find(candidate); it != aliases.end()) return it->second;
        if (std::find(known.begin(), known.end(), candidate) != known.end()) return candidate;
        return {};
    };
    if (auto r = resolve(s); !r.empty()) return r;
    if (s.size() > 1 && s.back() == 's') {
        if (auto r = resolve(s.substr(0, s.size() - 1)); !r.empty()) return r;
    }
    return s;
}

std::array<FoldSpec, 4> make_folds(const std::vector<std::string>& classes) {
    std::set<std::string> unique(classes.begin(), classes.end());
    if (unique.size() != classes.size()) throw ContractError("make_folds: duplicate class names");
    if (classes.size() < 4) throw ContractError("make_folds: need at least 4 classes");

    // Deal order: benchmark order when the catalog is exactly the benchmark classes.
    std::vector<std::string> order = classes;
    const auto& known = rsketch_classes();
    if (classes.size() == known.size()) {
        std::map<std::string, std::string> by_canonical;
        for (const auto& c : classes) by_canonical[canonical_class_name(c)] = c;
        const bool is_benchmark = std::all_of(known.begin(), known.end(),
                                              [&](const std::string& k) { return by_canonical.count(k) == 1; });
        if (is_benchmark) {
            order.clear();
            for (const auto& k : known) order.push_back(by_canonical.at(k));
        }
    }

    std::array<FoldSpec, 4> folds;
    for (std::size_t f = 0; f < 4; ++f) folds[f].id = "S" + std::to_string(f + 1);
    for (std::size_t i = 0; i < order.size(); ++i) folds[i % 4].unseen.push_back(order[i]);
    for (auto& fold : folds) {
        for (const auto& c : classes)
            if (!fold.is_unseen(c)) fold.seen.push_back(c);
    }
    return folds;
}

FoldSpec fold_by_id(const std::vector<std::string>& classes, const std::string& id) {
    for (auto& f : make_folds(classes))
        if (f.id == id) return f;
    throw ContractError("unknown fold '" + id + "' (expected S1..S4)");
}

}  // namespace mlgt
