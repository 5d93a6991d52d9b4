#include "mpirecon/collectives.hpp"

#include <algorithm>
#include <cctype>

#include "mpirecon/error.hpp"

namespace mpirecon {

namespace {

bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

} // namespace

const std::vector<CollectiveName>& default_search_keywords()
{
    static const std::vector<CollectiveName> names = {
        "Allgather", "Allreduce", "Alltoallv", "Barrier", "Gather",
        "Gatherv",   "Reduce",    "Scatter",   "Scatterv"};
    return names;
}

const std::vector<CollectiveName>& default_collective_names()
{
    static const std::vector<CollectiveName> names = {
        "Allgather", "Allreduce", "Alltoall", "Alltoallv", "Barrier", "Bcast",
        "Gather",    "Gatherv",   "Reduce",   "Scatter",   "Scatterv"};
    return names;
}

const std::vector<CollectivePair>& default_pairs()
{
    static const std::vector<CollectivePair> pairs = {
        {"Gather", "Scatter"}, {"Allreduce", "Allgather"}, {"Allreduce", "Alltoall"},
        {"Reduce", "Bcast"},   {"Gatherv", "Gather"},      {"Scatterv", "Scatter"}};
    return pairs;
}

CollectiveSet::CollectiveSet() : CollectiveSet(default_collective_names()) {}

CollectiveSet::CollectiveSet(std::vector<CollectiveName> names,
                             std::map<std::string, CollectiveName> aliases)
    : aliases_(std::move(aliases))
{
    for (auto& n : names) {
        if (n.empty()) {
            throw DomainError("empty collective name");
        }
        if (std::find(names_.begin(), names_.end(), n) == names_.end()) {
            names_.push_back(std::move(n));
        }
    }
    if (names_.empty()) {
        throw DomainError("collective set must not be empty");
    }
    for (const auto& [alias, target] : aliases_) {
        if (!contains(target)) {
            throw DomainError("alias '" + alias + "' targets unknown collective '" + target + "'");
        }
    }
}

bool CollectiveSet::contains(std::string_view name) const
{
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::optional<CollectiveName> CollectiveSet::lookup(std::string_view name,
                                                    bool case_insensitive) const
{
    for (const auto& n : names_) {
        if (case_insensitive ? iequals(n, name) : n == name) {
            return n;
        }
    }
    return std::nullopt;
}

std::optional<CollectiveName> CollectiveSet::lookup_alias(std::string_view identifier,
                                                          bool case_insensitive) const
{
    if (aliases_.empty()) {
        return std::nullopt;
    }
    if (!case_insensitive) {
        auto it = aliases_.find(std::string(identifier));
        if (it != aliases_.end()) {
            return it->second;
        }
        return std::nullopt;
    }
    for (const auto& [alias, target] : aliases_) {
        if (iequals(alias, identifier)) {
            return target;
        }
    }
    return std::nullopt;
}

void CollectiveSet::require(std::string_view name) const
{
    if (!contains(name)) {
        throw DomainError("unknown collective '" + std::string(name) + "'");
    }
}

CollectivePair parse_pair(std::string_view text)
{
    auto sep = text.find(':');
    if (sep == std::string_view::npos || sep == 0 || sep + 1 == text.size() ||
        text.find(':', sep + 1) != std::string_view::npos) {
        throw DomainError("malformed pair '" + std::string(text) + "', expected A:B");
    }
    return {std::string(text.substr(0, sep)), std::string(text.substr(sep + 1))};
}

std::string format_pair(const CollectivePair& pair, char sep)
{
    return pair.first + sep + pair.second;
}

} // namespace mpirecon
