#include "mpirecon/scanner.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <thread>

namespace mpirecon::scanner {

namespace fs = std::filesystem;

namespace {

bool is_ident(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_blank(char c)
{
    return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
}

char lower(char c)
{
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

std::string lowercase(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

bool is_c_family(Language language)
{
    return language == Language::C || language == Language::Cpp ||
           language == Language::Cuda || language == Language::OpenCL;
}

// Calls fn(line) for each physical line, without the trailing newline.
template <typename Fn>
void for_each_line(std::string_view content, Fn&& fn)
{
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string_view::npos) {
            fn(content.substr(pos));
            return;
        }
        fn(content.substr(pos, nl - pos));
        pos = nl + 1;
    }
}

std::string_view skip_blanks(std::string_view s)
{
    std::size_t i = 0;
    while (i < s.size() && is_blank(s[i])) {
        ++i;
    }
    return s.substr(i);
}

// "word" at the start of s followed by a non-identifier character.
bool starts_with_word(std::string_view s, std::string_view word, bool case_insensitive)
{
    if (s.size() < word.size()) {
        return false;
    }
    for (std::size_t i = 0; i < word.size(); ++i) {
        char c = case_insensitive ? lower(s[i]) : s[i];
        if (c != word[i]) {
            return false;
        }
    }
    return s.size() == word.size() || !is_ident(s[word.size()]);
}

// "#pragma <model>" with optional blanks after '#'.
bool is_c_directive(std::string_view line, std::string_view model)
{
    auto s = skip_blanks(line);
    if (s.empty() || s.front() != '#') {
        return false;
    }
    s = skip_blanks(s.substr(1));
    if (!starts_with_word(s, "pragma", false)) {
        return false;
    }
    s = s.substr(6);
    if (s.empty() || !is_blank(s.front())) {
        return false;
    }
    return starts_with_word(skip_blanks(s), model, false);
}

// "!$omp", "c$omp", "*$omp" (any case) as first non-blank token.
bool is_fortran_directive(std::string_view line, std::string_view model)
{
    auto s = skip_blanks(line);
    if (s.size() < 2 + model.size()) {
        return false;
    }
    char lead = lower(s[0]);
    if ((lead != '!' && lead != 'c' && lead != '*') || s[1] != '$') {
        return false;
    }
    return starts_with_word(s.substr(2), model, true);
}

class Blanker {
public:
    explicit Blanker(std::string& text) : text_(text) {}

    void blank(std::size_t i)
    {
        if (text_[i] != '\n') {
            text_[i] = ' ';
        }
    }

    void blank(std::size_t from, std::size_t to)
    {
        for (auto i = from; i < to && i < text_.size(); ++i) {
            blank(i);
        }
    }

private:
    std::string& text_;
};

std::int64_t line_of(std::string_view s, std::size_t pos)
{
    return 1 + std::count(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
}

std::string warning_at(std::string_view s, std::size_t pos, std::string_view what)
{
    return "line " + std::to_string(line_of(s, pos)) + ": " + std::string(what);
}

// Start of the identifier/number token ending right before pos.
std::size_t token_start(std::string_view s, std::size_t pos)
{
    while (pos > 0 && (is_ident(s[pos - 1]) || s[pos - 1] == '\'' || s[pos - 1] == '.')) {
        --pos;
    }
    return pos;
}

bool is_raw_string_prefix(std::string_view s, std::size_t quote)
{
    std::size_t start = quote;
    while (start > 0 && is_ident(s[start - 1])) {
        --start;
    }
    auto prefix = s.substr(start, quote - start);
    return prefix == "R" || prefix == "u8R" || prefix == "uR" || prefix == "UR" || prefix == "LR";
}

StripResult strip_c_family(std::string_view src)
{
    StripResult result{std::string(src), {}};
    Blanker out(result.text);
    const std::size_t n = src.size();
    std::size_t i = 0;

    auto quoted = [&](char quote) {
        // i is at the opening quote; leaves i one past the closing quote.
        std::size_t j = i + 1;
        while (j < n) {
            char c = src[j];
            if (c == '\\' && j + 1 < n) {
                out.blank(j, j + 2);
                j += 2;
            } else if (c == quote) {
                i = j + 1;
                return;
            } else if (c == '\n') {
                result.warnings.push_back(warning_at(src, i, "unterminated literal ends at newline"));
                i = j;
                return;
            } else {
                out.blank(j);
                ++j;
            }
        }
        result.warnings.push_back(warning_at(src, i, "unterminated literal at end of file"));
        i = n;
    };

    while (i < n) {
        char c = src[i];
        char next = i + 1 < n ? src[i + 1] : '\0';
        if (c == '/' && next == '/') {
            std::size_t j = i;
            // A backslash before the newline continues the comment.
            while (j < n) {
                if (src[j] == '\n') {
                    std::size_t k = j;
                    while (k > i && (src[k - 1] == '\r')) {
                        --k;
                    }
                    if (k > i && src[k - 1] == '\\') {
                        ++j;
                        continue;
                    }
                    break;
                }
                out.blank(j);
                ++j;
            }
            i = j;
        } else if (c == '/' && next == '*') {
            auto end = src.find("*/", i + 2);
            if (end == std::string_view::npos) {
                result.warnings.push_back(warning_at(src, i, "unterminated block comment"));
                out.blank(i, n);
                i = n;
            } else {
                out.blank(i, end + 2);
                i = end + 2;
            }
        } else if (c == '"' && is_raw_string_prefix(src, i)) {
            auto paren = src.find('(', i + 1);
            std::size_t end = std::string_view::npos;
            if (paren != std::string_view::npos && paren - i - 1 <= 16) {
                std::string closing = ")" + std::string(src.substr(i + 1, paren - i - 1)) + "\"";
                end = src.find(closing, paren + 1);
                if (end != std::string_view::npos) {
                    end += closing.size() - 1; // closing quote
                }
            }
            if (end == std::string_view::npos) {
                result.warnings.push_back(warning_at(src, i, "unterminated raw string"));
                out.blank(i + 1, n);
                i = n;
            } else {
                out.blank(i + 1, end);
                i = end + 1;
            }
        } else if (c == '"') {
            quoted('"');
        } else if (c == '\'') {
            auto start = token_start(src, i);
            if (start < i && std::isdigit(static_cast<unsigned char>(src[start]))) {
                ++i; // digit separator, e.g. 1'000'000
            } else {
                quoted('\'');
            }
        } else {
            ++i;
        }
    }
    return result;
}

bool is_fixed_comment_line(std::string_view line)
{
    if (line.empty()) {
        return false;
    }
    char c = line.front();
    return c == 'c' || c == 'C' || c == '*' || c == '!';
}

bool is_fixed_continuation(std::string_view line)
{
    if (line.size() < 6 || is_fixed_comment_line(line) || line[0] == '\t') {
        return false;
    }
    return line[5] != ' ' && line[5] != '0';
}

StripResult strip_fortran(std::string_view src, FortranForm form)
{
    StripResult result{std::string(src), {}};
    Blanker out(result.text);

    char in_string = '\0'; // open quote carried across a continuation
    bool continued = false;
    std::size_t string_open_pos = 0;
    std::size_t line_start = 0;

    while (line_start <= src.size()) {
        auto nl = src.find('\n', line_start);
        std::size_t line_end = nl == std::string_view::npos ? src.size() : nl;
        std::string_view line = src.substr(line_start, line_end - line_start);
        std::size_t pos = 0;

        if (form == FortranForm::Fixed) {
            if (is_fixed_comment_line(line)) {
                out.blank(line_start, line_end);
                if (nl == std::string_view::npos) {
                    break;
                }
                line_start = nl + 1;
                continue;
            }
            if (in_string != '\0') {
                if (is_fixed_continuation(line)) {
                    pos = 6;
                } else {
                    result.warnings.push_back(
                        warning_at(src, string_open_pos, "unterminated character literal"));
                    in_string = '\0';
                }
            }
        } else if (in_string != '\0') {
            if (continued) {
                while (pos < line.size() && is_blank(line[pos])) {
                    ++pos;
                }
                if (pos < line.size() && line[pos] == '&') {
                    ++pos;
                }
            } else {
                in_string = '\0';
            }
        }
        continued = false;

        while (pos < line.size()) {
            char c = line[pos];
            std::size_t abs = line_start + pos;
            if (in_string != '\0') {
                if (c == in_string) {
                    if (pos + 1 < line.size() && line[pos + 1] == in_string) {
                        out.blank(abs, abs + 2);
                        pos += 2;
                        continue;
                    }
                    in_string = '\0';
                    ++pos;
                    continue;
                }
                if (form == FortranForm::Free && c == '&' &&
                    skip_blanks(line.substr(pos + 1)).empty()) {
                    out.blank(abs, line_start + line.size());
                    continued = true;
                    break;
                }
                out.blank(abs);
                ++pos;
                continue;
            }
            if (c == '!' && !(form == FortranForm::Fixed && pos == 5)) {
                out.blank(abs, line_end);
                break;
            }
            if (c == '\'' || c == '"') {
                in_string = c;
                string_open_pos = abs;
            }
            ++pos;
        }

        if (in_string != '\0' && form == FortranForm::Free && !continued) {
            result.warnings.push_back(
                warning_at(src, string_open_pos, "unterminated character literal"));
            in_string = '\0';
        }
        if (nl == std::string_view::npos) {
            break;
        }
        line_start = nl + 1;
    }
    if (in_string != '\0') {
        result.warnings.push_back(
            warning_at(src, string_open_pos, "unterminated character literal at end of file"));
    }
    return result;
}

bool has_prefix(std::string_view s, std::string_view prefix, bool case_insensitive)
{
    if (s.size() < prefix.size()) {
        return false;
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        char c = case_insensitive ? static_cast<char>(std::toupper(static_cast<unsigned char>(s[i])))
                                  : s[i];
        if (c != prefix[i]) {
            return false;
        }
    }
    return true;
}

std::string read_file(const fs::path& path, bool& ok)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ok = false;
        return {};
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ok = !in.bad();
    return data;
}

struct FileScan {
    bool recorded = false;
    FileRecord record;
    std::vector<CallSite> sites;
    std::vector<ScanLogEntry> log;
};

FileScan scan_file(const fs::path& path, const std::string& rel, const RepoRecord& repo,
                   const CollectiveSet& set)
{
    FileScan out;
    bool ok = true;
    std::string content = read_file(path, ok);
    if (!ok) {
        out.log.push_back({rel, "unreadable, skipped"});
        return out;
    }
    Language language = classify_file(path);
    out.recorded = true;
    out.record.filename = rel;

    double bad = invalid_utf8_ratio(content);
    if (bad > kBinaryThreshold) {
        out.record.counts.total = physical_lines(content);
        std::ostringstream msg;
        msg << "binary content (" << static_cast<int>(bad * 100.0 + 0.5)
            << "% invalid UTF-8), no language attribution or call sites";
        out.log.push_back({rel, msg.str()});
        return out;
    }

    out.record.counts = count_lines(content, language);
    auto stripped = strip_non_code(content, language, fortran_form(path));
    for (auto& w : stripped.warnings) {
        out.log.push_back({rel, w});
    }
    for (auto& m : extract_call_sites(stripped.text, language, set)) {
        out.sites.push_back({repo.repo_id, rel, std::move(m.collective), m.line_number, m.column});
    }
    return out;
}

} // namespace

std::string_view to_string(Language language)
{
    switch (language) {
    case Language::C: return "C";
    case Language::Cpp: return "C++";
    case Language::Fortran: return "Fortran";
    case Language::Cuda: return "CUDA";
    case Language::OpenCL: return "OpenCL";
    case Language::Unrecognized: break;
    }
    return "unrecognized";
}

Language classify_file(const fs::path& path)
{
    const std::string ext = path.extension().string();
    if (ext == ".C") {
        return Language::Cpp;
    }
    static const std::map<std::string, Language, std::less<>> table = {
        {".c", Language::C},         {".h", Language::C},
        {".cc", Language::Cpp},      {".cpp", Language::Cpp},     {".cxx", Language::Cpp},
        {".hpp", Language::Cpp},     {".hh", Language::Cpp},
        {".f", Language::Fortran},   {".for", Language::Fortran}, {".f77", Language::Fortran},
        {".f90", Language::Fortran}, {".f95", Language::Fortran}, {".f03", Language::Fortran},
        {".cu", Language::Cuda},     {".cuh", Language::Cuda},
        {".cl", Language::OpenCL}};
    auto it = table.find(lowercase(ext));
    return it == table.end() ? Language::Unrecognized : it->second;
}

FortranForm fortran_form(const fs::path& path)
{
    auto ext = lowercase(path.extension().string());
    return (ext == ".f" || ext == ".for" || ext == ".f77") ? FortranForm::Fixed : FortranForm::Free;
}

std::int64_t physical_lines(std::string_view content)
{
    if (content.empty()) {
        return 0;
    }
    auto lines = static_cast<std::int64_t>(std::count(content.begin(), content.end(), '\n'));
    return content.back() == '\n' ? lines : lines + 1;
}

LineCounts count_lines(std::string_view content, Language language)
{
    LineCounts counts;
    if (language == Language::Unrecognized) {
        return counts;
    }
    const auto lines = physical_lines(content);
    counts.total = lines;
    switch (language) {
    case Language::C: counts.c = lines; break;
    case Language::Cpp: counts.cpp = lines; break;
    case Language::Fortran: counts.fortran = lines; break;
    case Language::Cuda: counts.cuda = lines; break;
    case Language::OpenCL: counts.opencl = lines; break;
    case Language::Unrecognized: break;
    }
    const bool fortran = language == Language::Fortran;
    for_each_line(content, [&](std::string_view line) {
        if (fortran) {
            counts.openmp += is_fortran_directive(line, "omp");
            counts.openacc += is_fortran_directive(line, "acc");
        } else {
            counts.openmp += is_c_directive(line, "omp");
            counts.openacc += is_c_directive(line, "acc");
        }
    });
    return counts;
}

StripResult strip_non_code(std::string_view content, Language language, FortranForm form)
{
    if (language == Language::Fortran) {
        return strip_fortran(content, form);
    }
    if (is_c_family(language)) {
        return strip_c_family(content);
    }
    return {std::string(content), {}};
}

std::vector<Match> extract_call_sites(std::string_view s, Language language,
                                      const CollectiveSet& set)
{
    std::vector<Match> matches;
    const bool ci = language == Language::Fortran;
    std::int64_t line = 1;
    std::size_t line_start = 0;
    std::size_t i = 0;
    while (i < s.size()) {
        char c = s[i];
        if (c == '\n') {
            ++line;
            line_start = ++i;
            continue;
        }
        if (!is_ident(c)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_ident(s[j])) {
            ++j;
        }
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            auto ident = s.substr(i, j - i);
            std::optional<CollectiveName> hit;
            if (has_prefix(ident, "MPI_", ci)) {
                hit = set.lookup(ident.substr(4), ci);
            }
            if (!hit) {
                hit = set.lookup_alias(ident, ci);
            }
            if (hit) {
                matches.push_back({std::move(*hit), line,
                                   static_cast<std::int64_t>(i - line_start + 1)});
            }
        }
        i = j;
    }
    return matches;
}

double invalid_utf8_ratio(std::string_view bytes)
{
    if (bytes.empty()) {
        return 0.0;
    }
    std::size_t invalid = 0;
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    while (i < n) {
        auto b = static_cast<unsigned char>(bytes[i]);
        std::size_t len = 0;
        unsigned min = 0;
        if (b < 0x80) {
            ++i;
            continue;
        } else if ((b & 0xE0) == 0xC0) {
            len = 2;
            min = 0x80;
        } else if ((b & 0xF0) == 0xE0) {
            len = 3;
            min = 0x800;
        } else if ((b & 0xF8) == 0xF0) {
            len = 4;
            min = 0x10000;
        } else {
            ++invalid;
            ++i;
            continue;
        }
        if (i + len > n) {
            ++invalid;
            ++i;
            continue;
        }
        unsigned cp = b & (0xFF >> (len + 1));
        bool good = true;
        for (std::size_t k = 1; k < len; ++k) {
            auto cb = static_cast<unsigned char>(bytes[i + k]);
            if ((cb & 0xC0) != 0x80) {
                good = false;
                break;
            }
            cp = (cp << 6) | (cb & 0x3F);
        }
        if (good && (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) {
            good = false;
        }
        if (good) {
            i += len;
        } else {
            ++invalid;
            ++i;
        }
    }
    return static_cast<double>(invalid) / static_cast<double>(n);
}

ScanResult scan_tree(const fs::path& root, const RepoRecord& repo, const CollectiveSet& set,
                     const ScanOptions& options)
{
    ScanResult result;
    result.repo = repo;

    std::vector<std::pair<std::string, fs::path>> files;
    std::error_code ec;
    fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
    if (ec) {
        result.log.push_back({".", "cannot open root: " + ec.message()});
        return result;
    }
    for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) {
            result.log.push_back({".", "traversal stopped: " + ec.message()});
            break;
        }
        const auto& entry = *it;
        std::error_code sec;
        if (entry.is_symlink(sec) || !entry.is_regular_file(sec)) {
            continue;
        }
        if (classify_file(entry.path()) == Language::Unrecognized) {
            continue;
        }
        files.emplace_back(entry.path().lexically_relative(root).generic_string(), entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<FileScan> scans(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto k = next.fetch_add(1); k < files.size(); k = next.fetch_add(1)) {
            scans[k] = scan_file(files[k].second, files[k].first, repo, set);
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(files.size(), 1));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }

    for (auto& scan : scans) {
        if (scan.recorded) {
            result.files.push_back(std::move(scan.record));
        }
        std::move(scan.sites.begin(), scan.sites.end(), std::back_inserter(result.call_sites));
        std::move(scan.log.begin(), scan.log.end(), std::back_inserter(result.log));
    }
    std::sort(result.call_sites.begin(), result.call_sites.end(), call_site_less);
    return result;
}

} // namespace mpirecon::scanner
