#include "commands.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <regex>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "cpdewarp/annotation.hpp"
#include "cpdewarp/dewarp.hpp"
#include "cpdewarp/grid.hpp"
#include "cpdewarp/image_io.hpp"
#include "cpdewarp/losses.hpp"
#include "cpdewarp/map_io.hpp"
#include "cpdewarp/metrics.hpp"
#include "cpdewarp/parallel.hpp"
#include "cpdewarp/service.hpp"
#include "cpdewarp/synth.hpp"

namespace cpd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool quiet = false;
};

void emit_error(std::ostream& err, std::string_view code, const std::string& message,
                const std::vector<int>& steps = {}) {
    json j = {{"error", code}, {"message", message}};
    if (!steps.empty()) j["valid_steps"] = steps;
    err << j.dump() << std::endl;
}

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Size parse_size(const std::string& s) {
    static const std::regex re(R"((\d+)[xX](\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw UsageError("--out-size must look like WxH");
    const Size size{std::stoi(m[1]), std::stoi(m[2])};
    if (size.width < 1 || size.height < 1) throw UsageError("--out-size must be positive");
    return size;
}

// "#rrggbb", "r,g,b" or a single grey level.
Color parse_color(const std::string& s) {
    static const std::regex hex(R"(#?([0-9a-fA-F]{6}))");
    static const std::regex rgb(R"((\d{1,3}),(\d{1,3}),(\d{1,3}))");
    static const std::regex grey(R"(\d{1,3})");
    std::smatch m;
    auto byte = [](int v) {
        if (v > 255) throw UsageError("--fill components must be 0..255");
        return static_cast<std::uint8_t>(v);
    };
    if (std::regex_match(s, m, rgb)) return {byte(std::stoi(m[1])), byte(std::stoi(m[2])), byte(std::stoi(m[3]))};
    if (std::regex_match(s, m, grey)) {
        const auto g = byte(std::stoi(s));
        return {g, g, g};
    }
    if (std::regex_match(s, m, hex)) {
        const auto v = std::stoul(m[1].str(), nullptr, 16);
        return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    }
    throw UsageError("--fill must be #rrggbb, r,g,b or a grey level");
}

Method method_arg(const std::string& s) {
    try {
        return parse_method(s);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

int cmd_dewarp(const Globals& g, std::ostream& out, const std::string& image_path,
               const std::string& annotation_path, const std::string& method, int step,
               const std::string& out_path, const std::string& out_size, const std::string& fill) {
    DewarpOptions opts;
    opts.method = method_arg(method);
    opts.step = step;
    if (!out_size.empty()) opts.out_size = parse_size(out_size);
    opts.fill = parse_color(fill);

    const AnnotationRecord record = read_annotation(annotation_path);
    const ImageBuffer image = read_image(image_path);
    if (image.size() != record.image_size) {
        throw Error(ErrorCode::DimensionMismatch, "image is " + std::to_string(image.width()) + "x" +
                                                      std::to_string(image.height()) +
                                                      " but the annotation expects " +
                                                      std::to_string(record.image_size.width) + "x" +
                                                      std::to_string(record.image_size.height));
    }
    DewarpTiming timing;
    const ImageBuffer rectified = dewarp(image, record.control, record.reference, opts, &timing);
    write_png(out_path, rectified);
    if (!g.quiet) {
        out << json{{"fit_ms", timing.fit_ms},
                    {"eval_ms", timing.eval_ms},
                    {"remap_ms", timing.remap_ms},
                    {"total_ms", timing.total_ms},
                    {"width", rectified.width()},
                    {"height", rectified.height()}}
                   .dump()
            << std::endl;
    }
    return kOk;
}

int cmd_synth(const Globals& g, std::ostream& out, const std::string& scans, const std::string& out_dir,
              int count, const std::string& config_path) {
    if (count < 0) throw UsageError("--count must be >= 0");
    synth::SynthConfig config;
    if (!config_path.empty()) config = synth::config_from_json(json::parse(read_file(config_path)));
    if (g.seed) config.seed = *g.seed;
    const auto manifest = synth::synthesize_dataset(scans, config, count, out_dir);
    if (!g.quiet) {
        out << json{{"count", manifest.size()}, {"seed", config.seed}, {"out", out_dir}}.dump() << std::endl;
    }
    return kOk;
}

int cmd_eval(std::ostream& out, const std::string& pred, const std::string& gt, const std::string& pred_map,
             const std::string& gt_map) {
    if (pred_map.empty() != gt_map.empty()) throw UsageError("--pred-map and --gt-map go together");
    const ImageBuffer a = read_image(pred);
    const ImageBuffer b = read_image(gt);
    json j = {{"ms_ssim", metrics::ms_ssim(a, b)}};
    if (!pred_map.empty()) {
        const auto e = metrics::map_endpoint_error(read_backward_map(pred_map), read_backward_map(gt_map));
        j["endpoint_mean_px"] = e.mean_px;
        j["endpoint_max_px"] = e.max_px;
    }
    out << j.dump() << std::endl;
    return kOk;
}

int cmd_eval_loss(std::ostream& out, const std::string& pred, const std::string& gt, double alpha,
                  double beta, int radius) {
    const AnnotationRecord p = read_annotation(pred);
    const AnnotationRecord t = read_annotation(gt);
    const losses::LossBreakdown l = losses::total_loss(
        p.control, t.control, {p.reference.v_interval, p.reference.h_interval},
        {t.reference.v_interval, t.reference.h_interval}, {alpha, beta}, radius);
    out << json{{"smooth_l1", l.smooth_l1}, {"l_c", l.correlation}, {"l_r", l.interval}, {"total", l.total}}.dump()
        << std::endl;
    return kOk;
}

int cmd_grid_info(std::ostream& out, const std::string& annotation) {
    const AnnotationRecord r = read_annotation(annotation);
    out << json{{"rows", r.control.rows()},
                {"cols", r.control.cols()},
                {"valid_steps", valid_steps(r.control.rows(), r.control.cols())}}
               .dump()
        << std::endl;
    return kOk;
}

int cmd_grid_subsample(std::ostream& out, const std::string& annotation, int step, int row_step, int col_step,
                       const std::string& out_path) {
    AnnotationRecord r = read_annotation(annotation);
    const int rs = row_step > 0 ? row_step : step;
    const int cs = col_step > 0 ? col_step : step;
    r.control = subsample_grid(r.control, rs, cs);
    r.reference = subsample_reference(r.reference, rs, cs);
    if (out_path.empty()) {
        out << to_json(r).dump(1) << std::endl;
    } else {
        write_annotation(out_path, r);
    }
    return kOk;
}

int cmd_serve(const Globals& g, std::ostream& out, std::string host, int port, std::string root) {
    // Signals are received by a dedicated thread; block them before the
    // server spawns its workers so they inherit the mask.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    service::Server server({host, port, root});
    const int bound = server.bind();
    if (!g.quiet) {
        out << json{{"host", host}, {"port", bound}, {"root", root}}.dump() << std::endl;
    }
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        server.stop();
    });
    server.listen();
    // listen() can also return on its own; wake the waiter in that case.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return kOk;
}

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Control-point document dewarping toolkit", "cpdewarp"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Master seed (synth)");
    app.add_option("--threads", g.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    app.add_flag("--quiet", g.quiet, "Suppress informational output");

    std::function<int()> action;

    auto* dewarp = app.add_subcommand("dewarp", "Rectify an image with its control points");
    std::string d_image, d_ann, d_method = "linear", d_out, d_size, d_fill = "#ffffff";
    int d_step = 1;
    dewarp->add_option("--image", d_image)->required();
    dewarp->add_option("--annotation", d_ann)->required();
    dewarp->add_option("--method", d_method, "tps or linear")->capture_default_str();
    dewarp->add_option("--step", d_step)->capture_default_str();
    dewarp->add_option("--out", d_out)->required();
    dewarp->add_option("--out-size", d_size, "WxH");
    dewarp->add_option("--fill", d_fill, "#rrggbb, r,g,b or grey")->capture_default_str();
    dewarp->callback([&] {
        action = [&] { return cmd_dewarp(g, out, d_image, d_ann, d_method, d_step, d_out, d_size, d_fill); };
    });

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string s_scans, s_out, s_config;
    int s_count = 0;
    synth->add_option("--scans", s_scans)->required();
    synth->add_option("--out", s_out)->required();
    synth->add_option("--count", s_count)->required();
    synth->add_option("--config", s_config, "JSON config file");
    synth->callback([&] { action = [&] { return cmd_synth(g, out, s_scans, s_out, s_count, s_config); }; });

    auto* eval = app.add_subcommand("eval", "Score a rectified image (and optionally a map)");
    std::string e_pred, e_gt, e_pmap, e_gmap;
    eval->add_option("--pred", e_pred)->required();
    eval->add_option("--gt", e_gt)->required();
    eval->add_option("--pred-map", e_pmap);
    eval->add_option("--gt-map", e_gmap);
    eval->callback([&] { action = [&] { return cmd_eval(out, e_pred, e_gt, e_pmap, e_gmap); }; });

    auto* eval_loss = app.add_subcommand("eval-loss", "Loss breakdown between two annotations");
    std::string l_pred, l_gt;
    double l_alpha = 0.1, l_beta = 0.01;
    int l_radius = losses::kWideRadius;
    eval_loss->add_option("--pred", l_pred)->required();
    eval_loss->add_option("--gt", l_gt)->required();
    eval_loss->add_option("--alpha", l_alpha)->capture_default_str();
    eval_loss->add_option("--beta", l_beta)->capture_default_str();
    eval_loss->add_option("--radius", l_radius)->capture_default_str();
    eval_loss->callback(
        [&] { action = [&] { return cmd_eval_loss(out, l_pred, l_gt, l_alpha, l_beta, l_radius); }; });

    auto* grid = app.add_subcommand("grid", "Inspect or subsample control grids");
    grid->require_subcommand(1);
    auto* info = grid->add_subcommand("info", "Print rows, cols and valid steps");
    std::string gi_ann;
    info->add_option("--annotation", gi_ann)->required();
    info->callback([&] { action = [&] { return cmd_grid_info(out, gi_ann); }; });
    auto* sub = grid->add_subcommand("subsample", "Keep every step-th vertex");
    std::string gs_ann, gs_out;
    int gs_step = 1, gs_row = 0, gs_col = 0;
    sub->add_option("--annotation", gs_ann)->required();
    sub->add_option("--step", gs_step)->capture_default_str();
    sub->add_option("--row-step", gs_row, "Overrides --step along rows");
    sub->add_option("--col-step", gs_col, "Overrides --step along columns");
    sub->add_option("--out", gs_out, "Output file (stdout when omitted)");
    sub->callback([&] {
        action = [&] { return cmd_grid_subsample(out, gs_ann, gs_step, gs_row, gs_col, gs_out); };
    });

    auto* serve = app.add_subcommand("serve", "Run the annotation service");
    std::string v_host = "127.0.0.1";
    std::string v_root = env_or("CPD_ROOT", "cpd_projects");
    int v_port = 8080;
    try {
        v_port = std::stoi(env_or("CPD_PORT", "8080"));
    } catch (const std::exception&) {
        emit_error(err, "Usage", "CPD_PORT must be an integer");
        return kUsage;
    }
    serve->add_option("--host", v_host)->capture_default_str();
    serve->add_option("--port", v_port, "0 picks a free port")->capture_default_str();
    serve->add_option("--root", v_root, "Project storage directory")->capture_default_str();
    serve->callback([&] { action = [&] { return cmd_serve(g, out, v_host, v_port, v_root); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        emit_error(err, "Usage", e.what());
        return kUsage;
    }
    if (seed_opt->count() > 0) g.seed = seed;
    set_thread_count(g.threads);

    try {
        return action();
    } catch (const UsageError& e) {
        emit_error(err, "Usage", e.what());
        return kUsage;
    } catch (const Error& e) {
        emit_error(err, to_string(e.code()), e.what(), e.valid_steps());
        return e.code() == ErrorCode::Io ? kIoError : kDataError;
    } catch (const json::exception& e) {
        emit_error(err, "Format", e.what());
        return kDataError;
    } catch (const std::filesystem::filesystem_error& e) {
        emit_error(err, "Io", e.what());
        return kIoError;
    } catch (const std::exception& e) {
        emit_error(err, "Internal", e.what());
        return kDataError;
    }
}

}  // namespace cpd::cli
