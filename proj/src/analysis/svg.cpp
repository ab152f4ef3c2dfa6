#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "air/analysis/analysis.hpp"

namespace air::analysis {

namespace {

constexpr double kW = 640, kH = 360, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
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

std::string header(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + num(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
           "</text>\n";
}

struct Scale {
    double lo, hi;
    double y(double v) const { return kTop + (hi - v) / (hi - lo) * (kH - kTop - kBottom); }
};

Scale make_scale(double lo, double hi) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    return {lo < 0 ? lo - pad : lo, hi + pad};
}

std::string axes(const Scale& s) {
    std::string out;
    const double x0 = kLeft, x1 = kW - kRight;
    out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(kH - kBottom) +
           "\" stroke=\"black\"/>\n";
    out += "<line x1=\"" + num(x0) + "\" y1=\"" + num(s.y(0)) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(s.y(0)) +
           "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = s.lo + (s.hi - s.lo) * i / 4.0;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", v);
        out += "<text x=\"" + num(x0 - 4) + "\" y=\"" + num(s.y(v) + 4) + "\" text-anchor=\"end\">" + buf + "</text>\n";
    }
    return out;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<Series>& series) {
    double lo = 0.0, hi = 0.0;
    std::size_t n = 1;
    for (const auto& s : series) {
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        n = std::max(n, s.values.size());
    }
    const Scale sc = make_scale(lo, hi);
    std::string out = header(title) + axes(sc);
    const double span = kW - kLeft - kRight;
    auto x = [&](std::size_t i) { return kLeft + (n > 1 ? span * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kPalette[k % 6];
        std::string pts;
        for (std::size_t i = 0; i < series[k].values.size(); ++i)
            pts += num(x(i)) + "," + num(sc.y(series[k].values[i])) + " ";
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
               "\"/>\n";
        out += "<text x=\"" + num(kLeft + 10) + "\" y=\"" + num(kH - kBottom + 20 + 12 * static_cast<double>(k)) +
               "\" fill=\"" + color + "\">" + escape(series[k].label) + "</text>\n";
    }
    return out + "</svg>\n";
}

std::string svg_bar_chart(const std::string& title, const std::vector<Bar>& bars) {
    double lo = 0.0, hi = 0.0;
    std::vector<std::string> groups, labels;
    for (const auto& b : bars) {
        const double e = std::isnan(b.err) ? 0.0 : b.err;
        if (std::isnan(b.value)) continue;
        lo = std::min(lo, b.value - e);
        hi = std::max(hi, b.value + e);
        if (std::find(groups.begin(), groups.end(), b.group) == groups.end()) groups.push_back(b.group);
        if (std::find(labels.begin(), labels.end(), b.label) == labels.end()) labels.push_back(b.label);
    }
    const Scale sc = make_scale(lo, hi);
    std::string out = header(title) + axes(sc);
    if (groups.empty()) return out + "</svg>\n";
    const double gw = (kW - kLeft - kRight) / static_cast<double>(groups.size());
    const double bw = gw * 0.8 / static_cast<double>(labels.size());
    for (const auto& b : bars) {
        if (std::isnan(b.value)) continue;
        const auto gi = static_cast<double>(std::find(groups.begin(), groups.end(), b.group) - groups.begin());
        const auto li = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), b.label) - labels.begin());
        const double x = kLeft + gi * gw + gw * 0.1 + static_cast<double>(li) * bw;
        const double y0 = sc.y(0), y1 = sc.y(b.value);
        out += "<rect x=\"" + num(x) + "\" y=\"" + num(std::min(y0, y1)) + "\" width=\"" + num(bw * 0.9) +
               "\" height=\"" + num(std::abs(y1 - y0)) + "\" fill=\"" + kPalette[li % 6] + "\"/>\n";
        if (!std::isnan(b.err) && b.err > 0) {
            const double cx = x + bw * 0.45;
            out += "<line x1=\"" + num(cx) + "\" y1=\"" + num(sc.y(b.value - b.err)) + "\" x2=\"" + num(cx) +
                   "\" y2=\"" + num(sc.y(b.value + b.err)) + "\" stroke=\"black\"/>\n";
        }
    }
    for (std::size_t g = 0; g < groups.size(); ++g)
        out += "<text x=\"" + num(kLeft + (static_cast<double>(g) + 0.5) * gw) + "\" y=\"" + num(kH - kBottom + 14) +
               "\" text-anchor=\"middle\">" + escape(groups[g]) + "</text>\n";
    for (std::size_t l = 0; l < labels.size(); ++l)
        out += "<text x=\"" + num(kLeft + 10 + 120 * static_cast<double>(l)) + "\" y=\"" + num(kH - 12) + "\" fill=\"" +
               kPalette[l % 6] + "\">" + escape(labels[l]) + "</text>\n";
    return out + "</svg>\n";
}

}  // namespace air::analysis
