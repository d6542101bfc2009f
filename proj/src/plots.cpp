#include "lapose/plots.hpp"

#include "lapose/common.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lapose {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;

const char* kPalette[8] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                           "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string svg_header(const std::string& title) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"12\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title
        << "</text>\n";
    return out.str();
}

struct PlaneMapper {
    double min_x = 0, max_x = 1, min_z = 0, max_z = 1;

    void expand(double x, double z) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_z = std::min(min_z, z);
        max_z = std::max(max_z, z);
    }

    std::pair<double, double> map(double x, double z) const {
        double span = std::max({max_x - min_x, max_z - min_z, 1e-9});
        double px = 60.0 + (x - min_x) / span * (kWidth - 120);
        double py = kHeight - 50.0 - (z - min_z) / span * (kHeight - 100);
        return {px, py};
    }
};

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
    std::ostringstream out;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (const auto& [x, y] : pts) out << x << "," << y << " ";
    out << "\"/>\n";
    return out.str();
}

} // namespace

void write_trajectory_svg(const std::filesystem::path& path, const Trajectory& gt,
                          const Trajectory& pred, const std::vector<size_t>& frustum_frames,
                          const std::string& title) {
    PlaneMapper mapper;
    for (const auto& p : gt.positions) mapper.expand(p.x, p.z);
    for (const auto& p : pred.positions) mapper.expand(p.x, p.z);

    auto to_points = [&](const Trajectory& t) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(t.frame_count());
        for (const auto& p : t.positions) pts.push_back(mapper.map(p.x, p.z));
        return pts;
    };

    std::ostringstream out;
    out << svg_header(title);
    out << polyline(to_points(gt), "#d62728");
    out << polyline(to_points(pred), "#2ca02c");

    // Frustum markers: a short wedge along the camera forward (xz-projected).
    auto frustums = [&](const Trajectory& t, const char* color) {
        for (size_t f : frustum_frames) {
            if (f >= t.frame_count()) continue;
            Vec3 fwd = t.orientations[f].rotate({0, 0, 1});
            double psi = std::atan2(fwd.x, fwd.z);
            auto [cx, cy] = mapper.map(t.positions[f].x, t.positions[f].z);
            double len = 12.0, half = 0.42;
            double ax = cx + len * std::sin(psi - half), ay = cy - len * std::cos(psi - half);
            double bx = cx + len * std::sin(psi + half), by = cy - len * std::cos(psi + half);
            out << "<path d=\"M" << cx << " " << cy << " L" << ax << " " << ay << " M" << cx
                << " " << cy << " L" << bx << " " << by << "\" stroke=\"" << color
                << "\" stroke-width=\"1.2\" fill=\"none\"/>\n";
            out << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"2.2\" fill=\"" << color
                << "\"/>\n";
        }
    };
    frustums(gt, "#d62728");
    frustums(pred, "#2ca02c");

    out << "<text x=\"12\" y=\"40\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d62728\">"
           "ground truth</text>\n";
    out << "<text x=\"12\" y=\"56\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#2ca02c\">"
           "prediction</text>\n";
    out << "</svg>\n";
    write_text_file(path, out.str());
}

void write_histogram_svg(const std::filesystem::path& path, const std::vector<double>& values,
                         double lo, double hi, int bins, const std::string& title) {
    std::vector<size_t> counts(size_t(bins), 0);
    for (double v : values) {
        int b = int((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        counts[size_t(b)]++;
    }
    size_t max_count = 1;
    for (size_t c : counts) max_count = std::max(max_count, c);

    std::ostringstream out;
    out << svg_header(title);
    double bar_w = double(kWidth - 120) / bins;
    for (int b = 0; b < bins; ++b) {
        double h = double(counts[size_t(b)]) / double(max_count) * (kHeight - 140);
        double x = 60.0 + b * bar_w;
        double y = kHeight - 60.0 - h;
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w - 2 << "\" height=\""
            << h << "\" fill=\"#1f77b4\"/>\n";
        out << "<text x=\"" << x << "\" y=\"" << kHeight - 42 << "\" font-family=\"sans-serif\" "
            << "font-size=\"9\">" << lo + (hi - lo) * b / bins << "</text>\n";
        out << "<text x=\"" << x << "\" y=\"" << y - 4 << "\" font-family=\"sans-serif\" "
            << "font-size=\"9\">" << counts[size_t(b)] << "</text>\n";
    }
    out << "</svg>\n";
    write_text_file(path, out.str());
}

void write_scatter_svg(const std::filesystem::path& path,
                       const std::vector<std::pair<double, double>>& points,
                       const std::vector<int>& labels, const std::vector<std::string>& class_names,
                       const std::string& title) {
    PlaneMapper mapper;
    if (!points.empty()) {
        mapper.min_x = mapper.max_x = points[0].first;
        mapper.min_z = mapper.max_z = points[0].second;
    }
    for (const auto& [x, y] : points) mapper.expand(x, y);

    std::ostringstream out;
    out << svg_header(title);
    for (size_t i = 0; i < points.size(); ++i) {
        auto [px, py] = mapper.map(points[i].first, points[i].second);
        const char* color = kPalette[labels[i] % 8];
        out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << color
            << "\" fill-opacity=\"0.75\"/>\n";
    }
    for (size_t c = 0; c < class_names.size(); ++c) {
        double y = 40.0 + 16.0 * double(c);
        out << "<circle cx=\"18\" cy=\"" << y - 4 << "\" r=\"4\" fill=\"" << kPalette[c % 8]
            << "\"/>\n";
        out << "<text x=\"28\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"11\">"
            << class_names[c] << "</text>\n";
    }
    out << "</svg>\n";
    write_text_file(path, out.str());
}

} // namespace lapose
