#pragma once

// Result bundles written by the command line tool: the run result, the
// assignment, the convergence trace, the regions and one scatter plot per
// description space, plus a manifest with the SHA-256 of every file.

#include "conceptid/engine.hpp"
#include "conceptid/error.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace conceptid::report {

inline constexpr std::string_view unassigned_color = "#b4b4b4";

// Purple, green, yellow first, then further distinct hues.
inline constexpr std::array<std::string_view, 10> palette { "#7b3fa0", "#2e9e5b", "#e6b800", "#1f77b4", "#d62728",
    "#8c564b", "#17becf", "#e377c2", "#7f7f00", "#ff7f0e" };

inline auto concept_color(std::size_t k) -> std::string
{
    if (k < palette.size()) {
        return std::string(palette[k]);
    }
    // Golden-angle hues keep colors distinct past the fixed palette.
    double const hue = std::fmod(static_cast<double>(k) * 137.508, 360.0);
    std::ostringstream s;
    s << "hsl(" << std::fixed << std::setprecision(1) << hue << ",65%,45%)";
    return s.str();
}

inline auto sha256_hex(std::string_view bytes) -> std::string
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest {};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    std::ostringstream s;
    s << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) {
        s << std::setw(2) << static_cast<int>(digest[i]);
    }
    return s.str();
}

inline auto assignment_csv(RunResult const& r) -> std::string
{
    std::ostringstream s;
    s << "sample_id,concept_label\n";
    for (std::size_t i = 0; i < r.sample_ids.size(); ++i) {
        s << r.sample_ids[i] << ',' << r.labels[i] << '\n';
    }
    return s.str();
}

inline auto convergence_csv(RunResult const& r) -> std::string
{
    std::ostringstream s;
    r.trace.write_csv(s);
    return s.str();
}

namespace detail {

    // Stable pseudo-random offset in [0, 1) for strip plots.
    inline auto jitter(SampleId id) -> double
    {
        auto x = static_cast<std::uint64_t>(id) + 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return static_cast<double>(x >> 11) * 0x1.0p-53;
    }

    inline auto fmt(double v) -> std::string
    {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << v;
        return s.str();
    }

    inline auto label(double v) -> std::string
    {
        std::ostringstream s;
        s << std::setprecision(4) << v;
        return s.str();
    }

    inline auto escape(std::string_view text) -> std::string
    {
        std::string out;
        for (char c : text) {
            switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
            }
        }
        return out;
    }

} // namespace detail

// Scatter of one description space in raw units. Points carry class "cK"
// for concept K or "grey" when unassigned; the style block defines exactly
// K + 1 classes. One-dimensional spaces are drawn as jittered strips.
inline auto scatter_svg(RunResult const& r, DataSet const& ds, std::size_t space) -> std::string
{
    auto const& sp = r.spec.partition.spaces.at(space);
    if (sp.features.empty() || sp.features.size() > 2) {
        throw ContractViolation("scatter_svg: only 1-D and 2-D description spaces can be drawn");
    }
    auto const fx = ds.schema().require(sp.features[0]);
    std::optional<std::size_t> fy;
    if (sp.features.size() == 2) {
        fy = ds.schema().require(sp.features[1]);
    }

    constexpr double width = 640, height = 480, left = 70, right = 180, top = 30, bottom = 50;
    double const pw = width - left - right;
    double const ph = height - top - bottom;
    auto const xr = ds.stats()[fx];
    auto const yr = fy ? ds.stats()[*fy] : Range { 0.0, 1.0 };
    auto scale = [](double v, Range rg) { return rg.width() > 0 ? (v - rg.min) / rg.width() : 0.5; };

    std::ostringstream s;
    s << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height
      << R"(" viewBox="0 0 )" << width << ' ' << height << "\">\n<style>\n";
    for (std::size_t k = 0; k < r.spec.concepts; ++k) {
        s << ".c" << k << "{fill:" << concept_color(k) << "}\n";
    }
    s << ".grey{fill:" << unassigned_color << "}\n</style>\n";
    s << "<title>" << detail::escape(sp.name) << "</title>\n";
    s << R"(<rect x=")" << left << R"(" y=")" << top << R"(" width=")" << pw << R"(" height=")" << ph
      << R"(" fill="none" stroke="#444"/>)" << '\n';

    // Unassigned first so concepts stay visible on top.
    auto draw = [&](bool assigned_pass) {
        for (std::size_t i = 0; i < r.sample_ids.size(); ++i) {
            int const l = r.labels[i];
            if ((l != unassigned) != assigned_pass) {
                continue;
            }
            auto row = ds.row_of(r.sample_ids[i]);
            if (!row) {
                throw NotFound("scatter_svg: sample " + std::to_string(r.sample_ids[i]) + " is not in the data set");
            }
            double const x = left + scale(ds.at(*row, fx), xr) * pw;
            double const yn = fy ? scale(ds.at(*row, *fy), yr) : 0.1 + 0.8 * detail::jitter(r.sample_ids[i]);
            double const y = top + (1.0 - yn) * ph;
            s << R"(<circle class=")" << (l == unassigned ? std::string("grey") : "c" + std::to_string(l))
              << R"(" cx=")" << detail::fmt(x) << R"(" cy=")" << detail::fmt(y) << R"(" r="1.6"/>)" << '\n';
        }
    };
    draw(false);
    draw(true);

    s << R"(<text x=")" << left + pw / 2 << R"(" y=")" << height - 12 << R"(" text-anchor="middle">)"
      << detail::escape(sp.features[0]) << "</text>\n";
    s << R"(<text x=")" << left << R"(" y=")" << height - 30 << R"(" font-size="10">)" << detail::label(xr.min)
      << "</text>\n";
    s << R"(<text x=")" << left + pw << R"(" y=")" << height - 30 << R"(" font-size="10" text-anchor="end">)"
      << detail::label(xr.max) << "</text>\n";
    if (fy) {
        s << R"(<text x="16" y=")" << top + ph / 2 << "\" transform=\"rotate(-90 16 " << top + ph / 2
          << ")\" text-anchor=\"middle\">" << detail::escape(sp.features[1]) << "</text>\n";
        s << R"(<text x=")" << left - 4 << R"(" y=")" << top + ph << R"(" font-size="10" text-anchor="end">)"
          << detail::label(yr.min) << "</text>\n";
        s << R"(<text x=")" << left - 4 << R"(" y=")" << top + 10 << R"(" font-size="10" text-anchor="end">)"
          << detail::label(yr.max) << "</text>\n";
    }

    double ly = top + 10;
    for (std::size_t k = 0; k <= r.spec.concepts; ++k) {
        bool const grey = k == r.spec.concepts;
        std::string const cls = grey ? "grey" : "c" + std::to_string(k);
        auto const count = grey ? r.unassigned_count : r.concept_sizes[k];
        s << R"(<circle class=")" << cls << R"(" cx=")" << width - right + 20 << R"(" cy=")" << ly
          << R"(" r="5"/>)" << '\n';
        s << R"(<text x=")" << width - right + 32 << R"(" y=")" << ly + 4 << R"(" font-size="12">)"
          << (grey ? std::string("unassigned") : "concept " + std::to_string(k)) << " (" << count << ")</text>\n";
        ly += 20;
    }
    s << "</svg>\n";
    return s.str();
}

struct BundleFile {
    std::string path; // relative to the bundle directory
    std::string sha256;
    std::size_t bytes { 0 };
};

struct Bundle {
    std::filesystem::path directory;
    std::vector<BundleFile> files;
};

inline void write_file(std::filesystem::path const& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
}

inline auto space_file_name(std::size_t d) -> std::string { return "space_" + std::to_string(d) + ".svg"; }

// `ds` is the raw data set the result was computed on.
inline auto write_bundle(RunResult const& r, DataSet const& ds, std::filesystem::path const& dir) -> Bundle
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
    }

    std::vector<std::pair<std::string, std::string>> contents;
    contents.emplace_back("result.json", nlohmann::json(r).dump(2) + "\n");
    contents.emplace_back("assignment.csv", assignment_csv(r));
    contents.emplace_back("convergence.csv", convergence_csv(r));
    contents.emplace_back("regions.json", nlohmann::json(r.regions).dump(2) + "\n");
    for (std::size_t d = 0; d < r.spec.partition.spaces.size(); ++d) {
        if (r.spec.partition.spaces[d].features.size() <= 2) {
            contents.emplace_back(space_file_name(d), scatter_svg(r, ds, d));
        }
    }

    Bundle bundle { dir, {} };
    nlohmann::json files = nlohmann::json::array();
    for (auto const& [name, text] : contents) {
        write_file(dir / name, text);
        BundleFile f { name, sha256_hex(text), text.size() };
        files.push_back({ { "path", f.path }, { "sha256", f.sha256 }, { "bytes", f.bytes } });
        bundle.files.push_back(std::move(f));
    }
    nlohmann::json manifest = { { "run_id", r.run_id }, { "files", files } };
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return bundle;
}

} // namespace conceptid::report
