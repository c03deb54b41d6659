#include "kpshift/svg.hpp"

#include <cstdarg>
#include <cstdio>

#include "kpshift/errors.hpp"

namespace kpshift {
namespace {

std::string fmt(const char* f, ...) {
    char buf[256];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// Fixed palette, one entry per region index. 16 colors covers K up to 16.
const char* const kPalette[16] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
    "#8c6d31", "#843c39", "#7b4173", "#3182bd"};

}  // namespace

std::string render_svg(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg,
                       const VizOptions& opt) {
    if (f.rank() != 4) {
        throw ShapeError("expected rank 4 video tensor, got rank " + std::to_string(f.rank()));
    }
    const std::size_t channels = f.extent(0);
    const std::size_t frames = f.extent(1);
    const std::size_t height = f.extent(2);
    const std::size_t width = f.extent(3);
    if (opt.channels.empty()) {
        throw ConfigError("need at least one channel to draw");
    }
    for (std::size_t c : opt.channels) {
        if (c >= channels) {
            throw ConfigError("channel " + std::to_string(c) + " out of range, input has " +
                              std::to_string(channels) + " channels");
        }
    }
    if (!(opt.cell > 0.0)) {
        throw ConfigError("cell size must be positive");
    }

    AreseStages stages = arese_run(f, net, cfg);
    const std::size_t regions = net.k * net.k;

    const double cell = opt.cell;
    const double margin = 14.0;
    const double gap = 14.0;
    const double label_h = 18.0;
    const double panel_w = static_cast<double>(width) * cell;
    const double panel_h = static_cast<double>(height) * cell;
    const double total_w = margin * 2.0 + panel_w * static_cast<double>(frames) +
                           gap * static_cast<double>(frames - 1);
    const double total_h = margin * 2.0 + label_h + panel_h;

    std::string out;
    out += fmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.2f\" height=\"%.2f\" "
               "viewBox=\"0 0 %.2f %.2f\">\n",
               total_w, total_h, total_w, total_h);
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (std::size_t t = 0; t < frames; ++t) {
        const double ox = margin + static_cast<double>(t) * (panel_w + gap);
        const double oy = margin + label_h;
        out += fmt("<text x=\"%.2f\" y=\"%.2f\" font-family=\"monospace\" font-size=\"12\">"
                   "t=%zu</text>\n",
                   ox, margin + 12.0, t);
        out += fmt("<rect class=\"panel\" x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                   "fill=\"none\" stroke=\"#cccccc\"/>\n",
                   ox, oy, panel_w, panel_h);

        const GridPartition& part = stages.partitions[t];
        for (double line : part.row_lines) {
            const double y = oy + line * cell;
            out += fmt("<line class=\"boundary\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                       "stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n",
                       ox, y, ox + panel_w, y);
        }
        for (double line : part.col_lines) {
            const double x = ox + line * cell;
            out += fmt("<line class=\"boundary\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                       "stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n",
                       x, oy, x, oy + panel_h);
        }

        for (std::size_t r = 0; r < regions; ++r) {
            const char* color = kPalette[r % 16];
            for (std::size_t c : opt.channels) {
                const double row = stages.keypoints.coords.at({r, c, t, 0});
                const double col = stages.keypoints.coords.at({r, c, t, 1});
                const double cx = ox + (col + 0.5) * cell;
                const double cy = oy + (row + 0.5) * cell;
                const double arm = 4.0;
                out += fmt("<line class=\"cross\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                           "stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                           cx - arm, cy - arm, cx + arm, cy + arm, color);
                out += fmt("<line class=\"cross\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                           "stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                           cx - arm, cy + arm, cx + arm, cy - arm, color);

                if (t + 1 < frames) {
                    const double dr = stages.shifts.at({r, c, t, 0});
                    const double dc = stages.shifts.at({r, c, t, 1});
                    if (dr == 0.0 && dc == 0.0) {
                        out += fmt("<circle class=\"dot\" cx=\"%.2f\" cy=\"%.2f\" r=\"2.50\" "
                                   "fill=\"%s\"/>\n",
                                   cx, cy, color);
                    } else {
                        const double tx = ox + (col + dc + 0.5) * cell;
                        const double ty = oy + (row + dr + 0.5) * cell;
                        out += fmt("<line class=\"arrow\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" "
                                   "y2=\"%.2f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                                   cx, cy, tx, ty, color);
                        out += fmt("<circle class=\"tip\" cx=\"%.2f\" cy=\"%.2f\" r=\"2.00\" "
                                   "fill=\"%s\"/>\n",
                                   tx, ty, color);
                    }
                }
            }
        }
    }
    out += "</svg>\n";
    return out;
}

}  // namespace kpshift
