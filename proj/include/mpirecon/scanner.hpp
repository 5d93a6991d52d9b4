#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mpirecon/collectives.hpp"
#include "mpirecon/records.hpp"

namespace mpirecon::scanner {

enum class Language { C, Cpp, Fortran, Cuda, OpenCL, Unrecognized };

enum class FortranForm { Free, Fixed };

std::string_view to_string(Language language);

// Extension-based classification. ".C" is C++, ".F"/".F90"/".F95" are
// Fortran; every other extension is matched case-insensitively.
Language classify_file(const std::filesystem::path& path);

// .f/.for/.f77 (any case) use fixed source form; the rest free form.
FortranForm fortran_form(const std::filesystem::path& path);

// Physical line count: newline count plus one for an unterminated last line.
std::int64_t physical_lines(std::string_view content);

// Line counts for one file attributed to its language bucket, plus the
// OpenMP/OpenACC directive lines.
LineCounts count_lines(std::string_view content, Language language);

struct StripResult {
    std::string text;
    // Diagnostics for unterminated literals or comments; empty when clean.
    std::vector<std::string> warnings;
};

// Blanks comment bodies and string/character literal bodies with spaces.
// Newlines are never touched, so line and column positions survive.
StripResult strip_non_code(std::string_view content, Language language,
                           FortranForm form = FortranForm::Free);

struct Match {
    CollectiveName collective;
    std::int64_t line_number = 0;
    std::int64_t column = 0;

    bool operator==(const Match&) const = default;
};

// Expects stripped content. Matches whole identifiers "MPI_<Name>" whose
// <Name> is a member of the set (case-insensitively for Fortran), and
// whole identifiers listed in the set's alias table.
std::vector<Match> extract_call_sites(std::string_view stripped, Language language,
                                      const CollectiveSet& set);

// Share of bytes that are not part of a valid UTF-8 sequence.
double invalid_utf8_ratio(std::string_view bytes);

// Content above this ratio is treated as binary.
inline constexpr double kBinaryThreshold = 0.10;

struct ScanOptions {
    std::size_t threads = 1;
};

// Recursively scans root (symlinks are not followed) and returns records
// for every recognised source file. Ordering is independent of threads.
ScanResult scan_tree(const std::filesystem::path& root, const RepoRecord& repo,
                     const CollectiveSet& set, const ScanOptions& options = {});

} // namespace mpirecon::scanner
