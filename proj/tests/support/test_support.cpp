#include "test_support.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "cpdewarp/grid.hpp"
#include "cpdewarp/image_io.hpp"

namespace cpd::test {

namespace fs = std::filesystem;

namespace {

// Coverage of [lo, hi] at t with a 1.5 px linear ramp on each edge.
double soft_span(double t, double lo, double hi) {
    const double ramp = 1.5;
    const double a = std::clamp((t - lo) / ramp + 0.5, 0.0, 1.0);
    const double b = std::clamp((hi - t) / ramp + 0.5, 0.0, 1.0);
    return std::min(a, b);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ImageBuffer make_scan(int width, int height, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> ink(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0);
    auto at = [&](int x, int y) -> double& { return ink[static_cast<std::size_t>(y) * width + x]; };

    const double margin = 0.08 * width;
    const double line_h = std::max(6.0, height / 40.0);
    const double glyph_h = 0.55 * line_h;
    // figure block in the lower third
    const double fig_x0 = margin + 0.1 * width, fig_x1 = width - margin - 0.1 * width;
    const double fig_y0 = 0.62 * height, fig_y1 = 0.82 * height;

    for (double y = margin; y + line_h < height - margin; y += line_h) {
        if (y + line_h > fig_y0 - line_h && y < fig_y1 + line_h) continue;
        double x = margin + (u(rng) < 0.15 ? 3 * line_h : 0.0);
        const double end = width - margin - u(rng) * (u(rng) < 0.2 ? 0.5 * width : 0.05 * width);
        while (x < end) {
            const double word = line_h * (0.6 + 2.4 * u(rng));
            const double darkness = 0.65 + 0.3 * u(rng);
            const int x0 = std::max(0, static_cast<int>(x) - 2);
            const int x1 = std::min(width - 1, static_cast<int>(x + word) + 2);
            const int y0 = std::max(0, static_cast<int>(y) - 2);
            const int y1 = std::min(height - 1, static_cast<int>(y + glyph_h) + 2);
            for (int py = y0; py <= y1; ++py) {
                const double cy = soft_span(py, y, y + glyph_h);
                if (cy <= 0) continue;
                for (int px = x0; px <= x1; ++px) {
                    // vertical strokes inside a word
                    const double stroke = 0.55 + 0.45 * std::cos((px - x) * 1.1);
                    at(px, py) = std::max(at(px, py), darkness * cy * soft_span(px, x, x + word) * stroke);
                }
            }
            x += word + 0.5 * line_h;
        }
    }
    // horizontal rule and a shaded disc
    const double rule_y = fig_y0 - 0.5 * line_h;
    const double cx = (fig_x0 + fig_x1) / 2, cy = (fig_y0 + fig_y1) / 2, rad = (fig_y1 - fig_y0) / 2;
    for (int py = 0; py < height; ++py) {
        for (int px = 0; px < width; ++px) {
            const double rule = soft_span(py, rule_y, rule_y + 1.5) * soft_span(px, margin, width - margin);
            const double d = std::hypot(px - cx, py - cy);
            const double disc = soft_span(d, -1.0, rad) * (0.25 + 0.5 * (px - cx + rad) / (2 * rad));
            at(px, py) = std::max({at(px, py), 0.8 * rule, disc});
        }
    }

    ImageBuffer img(width, height, 3);
    const double paper[3] = {244, 240, 232};
    const double ink_rgb[3] = {30, 32, 45};
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double a = at(x, y);
            for (int k = 0; k < 3; ++k) {
                img.pixel(y, x)[k] = static_cast<std::uint8_t>(std::lround(paper[k] * (1 - a) + ink_rgb[k] * a));
            }
        }
    }
    return img;
}

void write_scans(const fs::path& dir, int count, int width, int height, std::uint64_t seed) {
    fs::create_directories(dir);
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scan_%02d.png", i);
        // vary the aspect a little so padding is exercised on both axes
        const int w = i % 2 ? width : width - width / 8;
        const int h = i % 2 ? height - height / 10 : height;
        write_png(dir / name, make_scan(w, h, seed * 1000 + static_cast<std::uint64_t>(i)));
    }
}

fs::path fresh_dir(const std::string& name) {
    static std::atomic<int> counter{0};
    const fs::path p = fs::temp_directory_path() /
                       ("cpd_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ControlGrid jittered(const ReferenceSpec& spec, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    const ControlGrid base = build_reference_grid(spec);
    std::vector<Point2> pts(base.points().begin(), base.points().end());
    for (auto& p : pts) p = {p.x + u(rng), p.y + u(rng)};
    return ControlGrid(spec.rows, spec.cols, std::move(pts));
}

bool same_tree(const fs::path& a, const fs::path& b, std::string* why) {
    auto listing = [](const fs::path& root) {
        std::vector<fs::path> out;
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
        }
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto la = listing(a);
    const auto lb = listing(b);
    if (la != lb) {
        if (why) *why = "file lists differ";
        return false;
    }
    for (const auto& rel : la) {
        if (slurp(a / rel) != slurp(b / rel)) {
            if (why) *why = rel.string();
            return false;
        }
    }
    return true;
}

std::string cli_path() { return CPDEWARP_BIN; }

Child::Child(const std::vector<std::string>& argv, const std::vector<std::string>& env)
    : dir_(fresh_dir("proc")) {
    const fs::path out_file = dir_ / "out", err_file = dir_ / "err";
    pid_ = ::fork();
    if (pid_ == 0) {
        const int o = ::open(out_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        const int e = ::open(err_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        ::dup2(o, 1);
        ::dup2(e, 2);
        for (const auto& kv : env) ::putenv(const_cast<char*>(kv.c_str()));
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execv(args[0], args.data());
        ::_exit(127);
    }
}

Child::~Child() {
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        wait();
    }
    std::error_code ec;
    fs::remove_all(dir_, ec);
}

std::string Child::out() const { return slurp(dir_ / "out"); }
std::string Child::err() const { return slurp(dir_ / "err"); }

void Child::signal(int sig) const {
    if (pid_ > 0) ::kill(pid_, sig);
}

int Child::wait() {
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(pid_, &status, 0);
        exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        pid_ = -1;
    }
    return exit_code_;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::vector<std::string>& env) {
    Child child(argv, env);
    ProcessResult r;
    r.exit_code = child.wait();
    r.out = child.out();
    r.err = child.err();
    return r;
}

}  // namespace cpd::test
