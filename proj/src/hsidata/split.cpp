#include "memformer/hsidata/split.hpp"

#include <algorithm>
#include <charconv>
#include <optional>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace memformer {

namespace {

std::size_t share(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

std::optional<std::size_t> parse_count(const std::string& text) {
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        return std::nullopt;
    }
    return value;
}

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void append_entries(std::ostringstream& out, const char* name, const std::vector<PixelRef>& refs) {
    for (const auto& p : refs) {
        out << name << ',' << p.row << ',' << p.col << ',' << p.label << '\n';
    }
}

std::string entry_text(const SplitManifest& m) {
    std::ostringstream out;
    append_entries(out, "train", m.train);
    append_entries(out, "val", m.val);
    append_entries(out, "test", m.test);
    return out.str();
}

}  // namespace

SplitManifest stratified_split(const LabelMap& labels, SplitFractions fractions, std::uint64_t seed) {
    const double total = fractions.train + fractions.val + fractions.test;
    if (fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 || !(total > 0.0) ||
        total > 1.0 + 1e-12) {
        throw std::invalid_argument("stratified_split: fractions must be non-negative with 0 < sum <= 1");
    }
    const auto counts = labels.class_counts();
    const std::size_t classes = counts.size() - 1;
    if (classes == 0) {
        throw std::invalid_argument("stratified_split: label map has no labeled pixels");
    }
    for (std::size_t c = 1; c <= classes; ++c) {
        if (counts[c] < 3) {
            throw std::invalid_argument("stratified_split: class " + std::to_string(c) + " has only " +
                                        std::to_string(counts[c]) + " labeled pixels (need at least 3)");
        }
    }

    std::vector<std::vector<PixelRef>> by_class(classes + 1);
    for (std::size_t r = 0; r < labels.height(); ++r) {
        for (std::size_t c = 0; c < labels.width(); ++c) {
            if (auto l = labels.at(r, c); l != 0) {
                by_class[l].push_back({r, c, l});
            }
        }
    }

    SplitManifest m;
    m.seed = seed;
    m.fractions = fractions;
    std::mt19937_64 rng(seed);
    for (std::size_t c = 1; c <= classes; ++c) {
        auto& pool = by_class[c];
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t n = pool.size();
        const std::size_t n_train = std::min(share(fractions.train, n), n);
        const std::size_t n_val = std::min(share(fractions.val, n), n - n_train);
        const std::size_t n_test = std::min(share(fractions.test, n), n - n_train - n_val);
        auto it = pool.begin();
        m.train.insert(m.train.end(), it, it + static_cast<std::ptrdiff_t>(n_train));
        it += static_cast<std::ptrdiff_t>(n_train);
        m.val.insert(m.val.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
        it += static_cast<std::ptrdiff_t>(n_val);
        m.test.insert(m.test.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
    }
    std::sort(m.train.begin(), m.train.end());
    std::sort(m.val.begin(), m.val.end());
    std::sort(m.test.begin(), m.test.end());
    return m;
}

std::string format_manifest(const SplitManifest& m) {
    std::ostringstream out;
    out << "# seed=" << m.seed << '\n';
    out << "# fractions=" << format_real(m.fractions.train) << ',' << format_real(m.fractions.val) << ','
        << format_real(m.fractions.test) << '\n';
    return out.str() + entry_text(m);
}

SplitManifest parse_manifest(const std::string& text) {
    SplitManifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto bad = [&](const std::string& why) {
        return std::invalid_argument("manifest line " + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (line.rfind("# seed=", 0) == 0) {
            m.seed = std::stoull(line.substr(7));
            continue;
        }
        if (line.rfind("# fractions=", 0) == 0) {
            if (std::sscanf(line.c_str() + 12, "%lf,%lf,%lf", &m.fractions.train, &m.fractions.val,
                            &m.fractions.test) != 3) {
                throw bad("malformed fractions");
            }
            continue;
        }
        if (line[0] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::string split, row, col, label;
        if (!std::getline(fields, split, ',') || !std::getline(fields, row, ',') || !std::getline(fields, col, ',') ||
            !std::getline(fields, label)) {
            throw bad("expected split,row,col,class");
        }
        const auto r = parse_count(row);
        const auto c = parse_count(col);
        const auto l = parse_count(label);
        if (!r || !c || !l) {
            throw bad("non-numeric field");
        }
        if (*l == 0 || *l > 65535) {
            throw bad("class must be in 1..65535");
        }
        const PixelRef ref{*r, *c, static_cast<std::uint16_t>(*l)};
        if (split == "train") {
            m.train.push_back(ref);
        } else if (split == "val") {
            m.val.push_back(ref);
        } else if (split == "test") {
            m.test.push_back(ref);
        } else {
            throw bad("unknown split \"" + split + "\"");
        }
    }
    return m;
}

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << format_manifest(manifest);
}

SplitManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_manifest(text.str());
}

std::string manifest_hash(const SplitManifest& manifest) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : entry_text(manifest)) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace memformer
