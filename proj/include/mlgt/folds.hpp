#pragma once

#include <array>
#include <string>
#include <vector>

namespace mlgt {

/// One seen/unseen partition of the class catalog.
struct FoldSpec {
    std::string id;  // "S1".."S4"
    std::vector<std::string> unseen;
    std::vector<std::string> seen;

    bool is_unseen(const std::string& label) const;
};

/// The 20 class names of the remote sensing sketch benchmark, alphabetical.
const std::vector<std::string>& rsketch_classes();

/// Canonical benchmark name for a directory-style class name
/// ("storage_tanks" -> "storage tank"), or the lower-cased input if unknown.
std::string canonical_class_name(const std::string& name);

/// Four folds whose unseen sets partition the classes. When the names are
/// the 20 benchmark classes the published folds are reproduced (round-robin
/// over the alphabetical list); otherwise classes are dealt round-robin in
/// the given order. Throws ContractError on duplicates or fewer than 4 classes.
std::array<FoldSpec, 4> make_folds(const std::vector<std::string>& classes);

/// Picks "S1".."S4" from make_folds; throws ContractError for other ids.
FoldSpec fold_by_id(const std::vector<std::string>& classes, const std::string& id);

}  // namespace mlgt
