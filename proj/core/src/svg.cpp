#include "strata/svg.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace strata {

namespace {

struct Node {
    uint64_t before = 0;  // inclusive counts
    uint64_t after = 0;
    std::map<std::string, Node> children;
};

void insert(Node& root, const std::vector<std::string>& frames, uint64_t before,
            uint64_t after) {
    Node* cur = &root;
    cur->before += before;
    cur->after += after;
    for (const std::string& f : frames) {
        cur = &cur->children[f];
        cur->before += before;
        cur->after += after;
    }
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
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

// Stable warm palette keyed by the frame name.
std::string name_color(const std::string& name) {
    uint64_t h = 1469598103934665603ull;
    for (char c : name) {
        h ^= uint8_t(c);
        h *= 1099511628211ull;
    }
    int r = 205 + int(h % 50);
    int g = int(h / 50 % 180);
    int b = int(h / 9000 % 55);
    std::ostringstream os;
    os << "rgb(" << r << "," << g << "," << b << ")";
    return os.str();
}

std::string diff_color(uint64_t before, uint64_t after, uint64_t total_before,
                       uint64_t total_after) {
    double fb = total_before ? double(before) / double(total_before) : 0.0;
    double fa = total_after ? double(after) / double(total_after) : 0.0;
    double delta = fa - fb;
    if (delta > 0.0005) {
        int shade = 255 - std::min(155, int(delta * 4000));
        std::ostringstream os;
        os << "rgb(255," << shade << "," << shade << ")";
        return os.str();
    }
    if (delta < -0.0005) {
        int shade = 255 - std::min(155, int(-delta * 4000));
        std::ostringstream os;
        os << "rgb(" << shade << "," << shade << ",255)";
        return os.str();
    }
    return "rgb(224,224,224)";
}

int tree_depth(const Node& n) {
    int d = 0;
    for (const auto& [name, child] : n.children)
        d = std::max(d, 1 + tree_depth(child));
    return d;
}

struct RenderCtx {
    std::ostringstream out;
    const SvgOptions* opts = nullptr;
    bool diff = false;
    uint64_t total_before = 0;
    uint64_t total_after = 0;
    int height = 0;
};

void render_node(RenderCtx& ctx, const Node& node, const std::string& name,
                 double x, double width, int depth) {
    const SvgOptions& o = *ctx.opts;
    if (depth >= 0) {
        int y = ctx.height - (depth + 2) * o.row_height;
        std::string fill =
            ctx.diff ? diff_color(node.before, node.after, ctx.total_before,
                                  ctx.total_after)
                     : name_color(name);
        ctx.out << "<g><title>" << escape(name) << " (" << node.after;
        if (ctx.diff) ctx.out << " vs " << node.before;
        ctx.out << ")</title><rect x=\"" << x << "\" y=\"" << y << "\" width=\""
                << width << "\" height=\"" << o.row_height - 1 << "\" fill=\""
                << fill << "\"/>";
        if (width > 60)
            ctx.out << "<text x=\"" << x + 2 << "\" y=\""
                    << y + o.row_height - 4 << "\" font-size=\"11\" "
                    << "font-family=\"monospace\">" << escape(name)
                    << "</text>";
        ctx.out << "</g>\n";
    }
    uint64_t basis = ctx.diff ? node.after : node.after;  // widths follow after
    if (basis == 0) return;
    double cx = x;
    for (const auto& [child_name, child] : node.children) {
        double w = width * double(child.after) / double(basis);
        if (w / o.width >= o.min_fraction && child.after > 0)
            render_node(ctx, child, child_name, cx, w, depth + 1);
        cx += w;
    }
}

std::string render(const Node& root, bool diff, const SvgOptions& opts) {
    RenderCtx ctx;
    ctx.opts = &opts;
    ctx.diff = diff;
    ctx.total_before = root.before;
    ctx.total_after = root.after;
    int depth = tree_depth(root);
    ctx.height = (depth + 2) * opts.row_height + 24;

    ctx.out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\""
            << opts.width << "\" height=\"" << ctx.height << "\">\n";
    ctx.out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    ctx.out << "<text x=\"8\" y=\"16\" font-size=\"13\" "
               "font-family=\"monospace\">"
            << escape(opts.title) << "</text>\n";
    double cx = 0.0;
    for (const auto& [name, child] : root.children) {
        double w = root.after
                       ? double(opts.width) * double(child.after) /
                             double(root.after)
                       : 0.0;
        if (w / opts.width >= opts.min_fraction && child.after > 0)
            render_node(ctx, child, name, cx, w, 0);
        cx += w;
    }
    ctx.out << "</svg>\n";
    return ctx.out.str();
}

}  // namespace

std::string render_flamegraph(const FoldedProfile& profile,
                              const SvgOptions& options) {
    Node root;
    for (const auto& line : profile.lines)
        insert(root, line.frames, line.count, line.count);
    return render(root, false, options);
}

std::string render_diff_flamegraph(const FoldedProfile& before,
                                   const FoldedProfile& after,
                                   const SvgOptions& options) {
    Node root;
    for (const auto& line : before.lines) insert(root, line.frames, line.count, 0);
    for (const auto& line : after.lines) insert(root, line.frames, 0, line.count);
    return render(root, true, options);
}

}  // namespace strata
