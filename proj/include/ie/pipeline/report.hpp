#pragma once

// CSV and SVG forms of MI matrices, IE profiles and shot tables. Every writer
// renders to a string first; files are written whole through a .partial name.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ie/core/csv.hpp"
#include "ie/core/error.hpp"
#include "ie/pipeline/estimate.hpp"
#include "ie/pipeline/profile.hpp"

namespace ie {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    const auto tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp);
        out << text;
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// l,t,bits,epochs,seed for every cell that has an estimate.
inline std::string render_mi_matrix(const MIMatrix& m) {
    std::ostringstream os;
    write_csv_row(os, {"l", "t", "bits", "epochs", "seed"});
    for (std::size_t l = 0; l < m.layer_pairs(); ++l)
        for (std::size_t t = 0; t < m.tokens(); ++t)
            if (const auto& e = m.cell(l, t).estimate)
                write_csv_row(os, {std::to_string(l), std::to_string(t), format_real(e->value_bits),
                                   std::to_string(e->epochs_run), std::to_string(e->seed)});
    return os.str();
}

inline std::string render_bootstrap(const MIMatrix& m) {
    std::ostringstream os;
    write_csv_row(os, {"l", "t", "b", "bits"});
    for (std::size_t l = 0; l < m.layer_pairs(); ++l)
        for (std::size_t t = 0; t < m.tokens(); ++t) {
            const auto& c = m.cell(l, t);
            for (std::size_t b = 0; b < c.bootstrap_bits.size(); ++b)
                write_csv_row(os, {std::to_string(l), std::to_string(t), std::to_string(b),
                                   format_real(c.bootstrap_bits[b])});
        }
    return os.str();
}

inline std::string render_failed_cells(const std::vector<std::pair<std::string, const MIMatrix*>>& matrices) {
    std::ostringstream os;
    write_csv_row(os, {"store", "l", "t", "error"});
    for (const auto& [name, m] : matrices)
        for (const auto& f : m->failures())
            write_csv_row(os, {name, std::to_string(f.layer_pair), std::to_string(f.token), f.error});
    return os.str();
}

namespace detail {

inline std::size_t parse_index(const std::string& s, const char* what) {
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used == s.size()) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string("bad ") + what + " '" + s + "' in CSV");
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw InvalidArgument("bad number '" + s + "' in CSV");
}

} // namespace detail

// Rebuilds an (estimates only) MI matrix of the given shape from mi_matrix CSV.
inline MIMatrix read_mi_matrix(std::istream& in, std::size_t layer_pairs, std::size_t tokens) {
    const CsvTable t = read_csv(in);
    const auto cl = t.column("l"), ct = t.column("t"), cb = t.column("bits"), ce = t.column("epochs"),
               cs = t.column("seed");
    MIMatrix m(layer_pairs, tokens);
    for (const auto& r : t.rows) {
        MIEstimate e;
        e.layer_pair = detail::parse_index(r[cl], "l");
        e.token = detail::parse_index(r[ct], "t");
        e.value_bits = detail::parse_double(r[cb]);
        e.epochs_run = detail::parse_index(r[ce], "epochs");
        e.seed = std::stoull(r[cs]);
        m.cell(e.layer_pair, e.token).estimate = e;
    }
    return m;
}

inline void read_bootstrap(std::istream& in, MIMatrix& m) {
    const CsvTable t = read_csv(in);
    const auto cl = t.column("l"), ct = t.column("t"), cb = t.column("b"), cv = t.column("bits");
    for (const auto& r : t.rows) {
        auto& bits = m.cell(detail::parse_index(r[cl], "l"), detail::parse_index(r[ct], "t")).bootstrap_bits;
        if (detail::parse_index(r[cb], "b") != bits.size()) throw InvalidArgument("bootstrap rows out of order");
        bits.push_back(detail::parse_double(r[cv]));
    }
}

// t,e_hat,E_l0,...; absent values are empty fields.
inline std::string render_ie_profile(const IEProfile& p) {
    std::ostringstream os;
    std::vector<std::string> header{"t", "e_hat"};
    for (std::size_t l = 0; l < p.layer_pairs(); ++l) header.push_back("E_l" + std::to_string(l));
    write_csv_row(os, header);
    for (std::size_t t = 0; t < p.tokens(); ++t) {
        std::vector<std::string> row{std::to_string(t), format_real(p.e_hat[t])};
        for (std::size_t l = 0; l < p.layer_pairs(); ++l) row.push_back(format_real(p.e[l][t]));
        write_csv_row(os, row);
    }
    return os.str();
}

inline IEProfile read_ie_profile(std::istream& in) {
    const CsvTable t = read_csv(in);
    if (t.header.size() < 2 || t.header[0] != "t" || t.header[1] != "e_hat")
        throw InvalidArgument("not an IE profile CSV");
    IEProfile p;
    p.e.resize(t.header.size() - 2);
    auto opt = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional(detail::parse_double(s)); };
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        if (detail::parse_index(r[0], "t") != i) throw InvalidArgument("IE profile rows out of order");
        p.e_hat.push_back(opt(r[1]));
        for (std::size_t l = 0; l < p.e.size(); ++l) p.e[l].push_back(opt(r[l + 2]));
    }
    return p;
}

inline std::string render_shot_report(const std::vector<ShotRow>& rows) {
    std::ostringstream os;
    write_csv_row(os, {"shot", "value", "sd", "sd_position", "sd_bootstrap", "delta", "delta_sign"});
    for (const auto& r : rows)
        write_csv_row(os, {std::to_string(r.stat.shot), format_real(r.stat.mean), format_real(r.stat.sd),
                           format_real(r.stat.sd_position), format_real(r.stat.sd_bootstrap), format_real(r.delta),
                           delta_sign(r.delta)});
    return os.str();
}

// Statistics,shot1,...,shotN with a value row and an SD row.
inline std::string render_shot_table(const std::vector<ShotRow>& rows, int digits = 4) {
    std::ostringstream os;
    std::vector<std::string> header{"Statistics"}, value{"value"}, sd{"SD"};
    for (const auto& r : rows) {
        header.push_back("shot" + std::to_string(r.stat.shot));
        value.push_back(format_real(r.stat.mean, digits));
        sd.push_back(format_real(r.stat.sd, digits));
    }
    write_csv_row(os, header);
    write_csv_row(os, value);
    write_csv_row(os, sd);
    return os.str();
}

inline std::string render_comparison(const std::vector<ComparisonRow>& rows) {
    std::ostringstream os;
    const bool summary = rows.size() >= 2;
    std::vector<std::string> header{"Text+Estimator"};
    for (std::size_t t = 0; t < rows.front().e_hat.size(); ++t) header.push_back("token" + std::to_string(t));
    if (summary) header.insert(header.end(), {"mean", "sd", "delta_mean"});
    write_csv_row(os, header);
    for (const auto& r : rows) {
        std::vector<std::string> f{r.label};
        for (const auto& v : r.e_hat) f.push_back(format_real(v));
        if (summary) f.insert(f.end(), {format_real(r.mean), format_real(r.sd), format_real(r.delta_mean)});
        write_csv_row(os, f);
    }
    return os.str();
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

// Line chart of Ê(t), one polyline per profile; gaps break the line.
inline std::string render_profile_svg(const std::vector<std::pair<std::string, IEProfile>>& profiles) {
    constexpr double W = 640, H = 360, M = 40;
    double lo = 0, hi = 0;
    std::size_t T = 1;
    for (const auto& [_, p] : profiles) {
        T = std::max(T, p.tokens());
        for (const auto& v : p.e_hat)
            if (v) lo = std::min(lo, *v), hi = std::max(hi, *v);
    }
    if (hi - lo < 1e-12) hi = lo + 1;
    auto x = [&](std::size_t t) { return M + (W - 2 * M) * (T > 1 ? double(t) / double(T - 1) : 0.5); };
    auto y = [&](double v) { return H - M - (H - 2 * M) * (v - lo) / (hi - lo); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<line x1=\"" << M << "\" y1=\"" << y(0) << "\" x2=\"" << W - M << "\" y2=\"" << y(0)
       << "\" stroke=\"#999\"/>\n";
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        const auto& [name, p] = profiles[i];
        const char* color = colors[i % 6];
        std::string pts;
        auto flush = [&] {
            if (!pts.empty())
                os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"" << pts << "\"/>\n";
            pts.clear();
        };
        for (std::size_t t = 0; t < p.tokens(); ++t) {
            if (!p.e_hat[t]) {
                flush();
                continue;
            }
            pts += format_real(x(t), 6) + "," + format_real(y(*p.e_hat[t]), 6) + " ";
        }
        flush();
        os << "<text x=\"" << M + 4 << "\" y=\"" << M + 14 * double(i + 1) << "\" fill=\"" << color
           << "\" font-size=\"12\">" << xml_escape(name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace ie
