#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mpirecon {

// Collective base names without the MPI_ prefix, e.g. "Allreduce".
using CollectiveName = std::string;
using CollectivePair = std::pair<CollectiveName, CollectiveName>;

// Keyword list used to query the hosting service.
const std::vector<CollectiveName>& default_search_keywords();

// Search keywords plus the Table-II additions (Alltoall, Bcast).
const std::vector<CollectiveName>& default_collective_names();

// The six pairs sampled by the all-pair and homogeneity experiments.
const std::vector<CollectivePair>& default_pairs();

// Ordered set of collective names recognised by the scanner, plus an
// optional alias table mapping wrapper identifiers (e.g. a library's own
// "hypre_MPI_Allreduce") to a member collective. Aliases are empty unless
// configured.
class CollectiveSet {
public:
    CollectiveSet();
    explicit CollectiveSet(std::vector<CollectiveName> names,
                           std::map<std::string, CollectiveName> aliases = {});

    const std::vector<CollectiveName>& names() const { return names_; }
    const std::map<std::string, CollectiveName>& aliases() const { return aliases_; }

    bool contains(std::string_view name) const;

    // Exact (case-sensitive) or ASCII case-insensitive lookup. Returns the
    // canonical spelling of the member.
    std::optional<CollectiveName> lookup(std::string_view name, bool case_insensitive) const;
    std::optional<CollectiveName> lookup_alias(std::string_view identifier,
                                               bool case_insensitive) const;

    // Throws DomainError when name is not a member.
    void require(std::string_view name) const;

private:
    std::vector<CollectiveName> names_;
    std::map<std::string, CollectiveName> aliases_;
};

// "Reduce:Bcast" -> {"Reduce", "Bcast"}. Throws DomainError on bad shape.
CollectivePair parse_pair(std::string_view text);
std::string format_pair(const CollectivePair& pair, char sep = ':');

} // namespace mpirecon
