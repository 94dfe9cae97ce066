#pragma once

// Static SVG charts for the Pareto frontier and the j_actual / state_mse
// scatter.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffctl/error.hpp"

namespace diffctl::cli {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw FormatError("csv: missing column '" + name + "'");
    }

    std::vector<double> numbers(const std::string& name) const {
        const int c = column(name);
        std::vector<double> out;
        for (const auto& r : rows) {
            if (c >= static_cast<int>(r.size())) throw FormatError("csv: short row");
            try {
                std::size_t used = 0;
                out.push_back(std::stod(r[c], &used));
                if (used != r[c].size()) throw FormatError("csv: bad number '" + r[c] + "'");
            } catch (const std::logic_error&) {
                throw FormatError("csv: bad number '" + r[c] + "' in column '" + name + "'");
            }
        }
        return out;
    }
};

/// Comma-separated values with one header line; lines starting with '#' are skipped.
inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot read csv '" + path + "'");
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(item);
        if (!s.empty() && s.back() == ',') out.emplace_back();
        return out;
    };
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (t.header.empty()) {
            t.header = split(line);
            continue;
        }
        auto r = split(line);
        if (r.size() != t.header.size()) throw FormatError("csv '" + path + "': row width differs from header");
        t.rows.push_back(std::move(r));
    }
    if (t.header.empty()) throw FormatError("csv '" + path + "' is empty");
    return t;
}

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool line = true;
};

struct ChartSpec {
    std::string title;
    std::string x_label, y_label;
    bool log_x = false, log_y = false;
    bool diagonal = false; ///< draw the y = x reference line
};

namespace plot_detail {

inline std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

} // namespace plot_detail

/// Renders series to an SVG document. Log axes require positive values;
/// non-positive points are dropped from log axes.
inline std::string render_svg(const std::vector<Series>& series, const ChartSpec& spec) {
    if (series.empty()) throw ConfigError("plot: no series to draw");
    const double W = 640, H = 480, L = 80, R = 160, T = 40, B = 60;
    auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
    auto ok = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!spec.log_x || x > 0) && (!spec.log_y || y > 0);
    };
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ShapeError("plot: series x/y length mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!ok(s.x[i], s.y[i])) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (!std::isfinite(x0)) throw ConfigError("plot: no drawable points");
    if (spec.diagonal) {
        const double lo = std::min(x0, y0), hi = std::max(x1, y1);
        x0 = y0 = lo;
        x1 = y1 = hi;
    }
    auto pad = [](double& a, double& b) {
        const double span = b - a;
        const double p = span > 0 ? 0.05 * span : (a != 0 ? 0.1 * std::abs(a) : 1.0);
        a -= p;
        b += p;
    };
    pad(x0, x1);
    pad(y0, y1);
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << plot_detail::esc(spec.title) << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << (W - L - R) << "\" height=\"" << (H - T - B)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        const double vx = spec.log_x ? std::pow(10.0, fx) : fx, vy = spec.log_y ? std::pow(10.0, fy) : fy;
        const double sx = L + (W - L - R) * i / 4.0, sy = H - B - (H - T - B) * i / 4.0;
        o << "<text x=\"" << sx << "\" y=\"" << (H - B + 16) << "\" text-anchor=\"middle\">" << plot_detail::fmt(vx)
          << "</text>\n";
        o << "<text x=\"" << (L - 6) << "\" y=\"" << (sy + 4) << "\" text-anchor=\"end\">" << plot_detail::fmt(vy)
          << "</text>\n";
    }
    o << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"" << (H - 16) << "\" text-anchor=\"middle\">"
      << plot_detail::esc(spec.x_label) << "</text>\n";
    o << "<text x=\"18\" y=\"" << (T + (H - T - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (T + (H - T - B) / 2) << ")\">" << plot_detail::esc(spec.y_label) << "</text>\n";
    if (spec.diagonal) {
        const double a = spec.log_x ? std::pow(10.0, x0) : x0, b = spec.log_x ? std::pow(10.0, x1) : x1;
        o << "<line x1=\"" << px(a) << "\" y1=\"" << py(a) << "\" x2=\"" << px(b) << "\" y2=\"" << py(b)
          << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    }
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* c = colors[si % 7];
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (ok(s.x[i], s.y[i])) pts.emplace_back(px(s.x[i]), py(s.y[i]));
        if (s.line && pts.size() > 1) {
            o << "<polyline fill=\"none\" stroke=\"" << c << "\" points=\"";
            for (const auto& [a, b] : pts) o << a << "," << b << " ";
            o << "\"/>\n";
        }
        for (const auto& [a, b] : pts)
            o << "<circle cx=\"" << a << "\" cy=\"" << b << "\" r=\"3.5\" fill=\"" << c << "\"/>\n";
        o << "<text x=\"" << (W - R + 12) << "\" y=\"" << (T + 16 + 18 * si) << "\" fill=\"" << c << "\">"
          << plot_detail::esc(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

inline void write_svg(const std::string& path, const std::vector<Series>& series, const ChartSpec& spec) {
    const auto doc = render_svg(series, spec); // render first so failures leave no file
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << doc;
}

/// Pareto frontier: one curve per (label, csv) pair, j_energy on x, j_actual on y.
inline void plot_pareto(const std::vector<std::pair<std::string, std::string>>& methods, const std::string& out_path) {
    if (methods.empty()) throw ConfigError("plot: empty method list");
    std::vector<Series> series;
    bool positive = true;
    for (const auto& [label, path] : methods) {
        auto t = read_csv(path);
        Series s{label, t.numbers("mean_j_energy"), t.numbers("mean_j_actual"), true};
        std::vector<std::size_t> order(s.x.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
        Series sorted{label, {}, {}, true};
        for (auto i : order) {
            sorted.x.push_back(s.x[i]);
            sorted.y.push_back(s.y[i]);
            positive = positive && s.x[i] > 0 && s.y[i] > 0;
        }
        series.push_back(std::move(sorted));
    }
    write_svg(out_path, series, {"Pareto frontier", "J_energy", "J_actual", positive, positive, false});
}

/// Scatter of j_actual (x) against state_mse (y) with the y = x line.
inline void plot_scatter(const std::string& csv_path, const std::string& out_path, const std::string& label = "samples") {
    auto t = read_csv(csv_path);
    Series s{label, t.numbers("j_actual"), t.numbers("state_mse"), false};
    bool positive = !s.x.empty();
    for (std::size_t i = 0; i < s.x.size(); ++i) positive = positive && s.x[i] > 0 && s.y[i] > 0;
    write_svg(out_path, {s}, {"J_actual vs state MSE", "J_actual", "state MSE", positive, positive, true});
}

} // namespace diffctl::cli
