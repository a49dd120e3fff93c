#include "cpdewarp/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <random>

#include "httplib.h"
#include "cpdewarp/grid.hpp"
#include "cpdewarp/image_io.hpp"
#include "cpdewarp/map_io.hpp"

namespace cpd::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kUniformMargin = 0.02;
constexpr int kDefaultPreviewSide = 1024;

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 &&
           std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isalnum(c); });
}

ProjectInfo info_from_json(const json& j) {
    ProjectInfo info;
    info.id = j.at("id").get<std::string>();
    info.revision = j.at("revision").get<std::uint64_t>();
    info.created = j.at("created").get<std::string>();
    info.modified = j.at("modified").get<std::string>();
    info.default_method = parse_method(j.at("default_method").get<std::string>());
    info.default_step = j.at("default_step").get<int>();
    return info;
}

std::string preview_name(std::uint64_t revision, Method method, int step, int max_side) {
    return "r" + std::to_string(revision) + "_" + std::string(to_string(method)) + "_s" +
           std::to_string(step) + "_m" + std::to_string(max_side) + ".png";
}

}  // namespace

json to_json(const ProjectInfo& info) {
    return {{"id", info.id},
            {"revision", info.revision},
            {"created", info.created},
            {"modified", info.modified},
            {"default_method", std::string(to_string(info.default_method))},
            {"default_step", info.default_step}};
}

AnnotationRecord uniform_annotation(Size image_size, int rows, int cols) {
    if (rows < 2 || cols < 2) {
        throw Error(ErrorCode::InvalidArgument, "grid needs rows, cols >= 2");
    }
    if (image_size.width < 1 || image_size.height < 1) {
        throw Error(ErrorCode::InvalidResolution, "image must be non-empty");
    }
    const double mx = kUniformMargin * image_size.width;
    const double my = kUniformMargin * image_size.height;
    ReferenceSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    spec.origin = {mx, my};
    spec.h_interval = (image_size.width - 2 * mx) / (cols - 1);
    spec.v_interval = (image_size.height - 2 * my) / (rows - 1);

    AnnotationRecord r;
    r.image = "source.png";
    r.image_size = image_size;
    r.reference = spec;
    r.control = build_reference_grid(spec);
    r.provenance.source = "uniform";
    return r;
}

ProjectStore::ProjectStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_ / "projects", ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create project root " + root_.string() + ": " + ec.message());
    load_existing();
}

void ProjectStore::load_existing() {
    for (const auto& d : fs::directory_iterator(root_ / "projects")) {
        const std::string name = d.path().filename().string();
        if (!d.is_directory() || !valid_id(name)) continue;  // skips half-created .tmp dirs
        try {
            auto e = std::make_shared<Entry>();
            e->dir = d.path();
            auto snap = std::make_shared<Snapshot>();
            snap->info = info_from_json(json::parse(read_file(e->dir / "project.json")));
            snap->annotation = read_annotation(e->dir / "annotation.json");
            e->image = std::make_shared<const ImageBuffer>(read_image(e->dir / "source.png"));
            e->snapshot = std::move(snap);
            projects_.emplace(name, std::move(e));
        } catch (const std::exception& ex) {
            std::cerr << "skipping unreadable project " << name << ": " << ex.what() << "\n";
        }
    }
}

std::string ProjectStore::new_id() {
    static thread_local std::mt19937_64 gen{std::random_device{}()};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
    return buf;
}

std::shared_ptr<ProjectStore::Entry> ProjectStore::find(const std::string& id) const {
    std::shared_lock lock(index_mutex_);
    const auto it = projects_.find(id);
    if (it == projects_.end()) throw NotFound("no project " + id);
    return it->second;
}

void ProjectStore::persist(const Entry& entry, const Snapshot& snap) const {
    write_annotation(entry.dir / "annotation.json", snap.annotation);
    write_file_atomic(entry.dir / "project.json", to_json(snap.info).dump(1) + "\n");
}

Snapshot ProjectStore::insert(std::string_view image_bytes, AnnotationRecord record) {
    auto image = std::make_shared<const ImageBuffer>(decode_image(image_bytes));
    if (record.image_size != image->size()) {
        throw Error(ErrorCode::DimensionMismatch, "annotation image_size does not match the uploaded image");
    }
    record.image = "source.png";

    std::string id;
    {
        std::shared_lock lock(index_mutex_);
        do id = new_id();
        while (projects_.count(id));
    }
    const fs::path staging = root_ / "projects" / (".tmp-" + id);
    const fs::path final_dir = root_ / "projects" / id;
    std::error_code ec;
    fs::create_directories(staging / "previews", ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create project directory: " + ec.message());

    auto e = std::make_shared<Entry>();
    e->dir = staging;
    e->image = image;
    Snapshot snap;
    snap.info.id = id;
    snap.info.revision = 0;
    snap.info.created = snap.info.modified = utc_now();
    snap.annotation = std::move(record);
    write_file_atomic(staging / "source.png", encode_png(*image));
    persist(*e, snap);
    fs::rename(staging, final_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot finalize project directory: " + ec.message());
    e->dir = final_dir;
    e->snapshot = std::make_shared<const Snapshot>(snap);

    std::unique_lock lock(index_mutex_);
    projects_.emplace(id, std::move(e));
    return snap;
}

Snapshot ProjectStore::create_uniform(std::string_view image_bytes, int rows, int cols) {
    if (rows < 2 || cols < 2) throw Error(ErrorCode::InvalidArgument, "grid needs rows, cols >= 2");
    const ImageBuffer probe = decode_image(image_bytes);
    return insert(image_bytes, uniform_annotation(probe.size(), rows, cols));
}

Snapshot ProjectStore::create_from_annotation(std::string_view image_bytes, const AnnotationRecord& record) {
    return insert(image_bytes, record);
}

std::vector<ProjectInfo> ProjectStore::list() const {
    std::vector<ProjectInfo> out;
    std::shared_lock lock(index_mutex_);
    for (const auto& [id, e] : projects_) out.push_back(std::atomic_load(&e->snapshot)->info);
    return out;
}

Snapshot ProjectStore::get(const std::string& id) const {
    return *std::atomic_load(&find(id)->snapshot);
}

std::string ProjectStore::image_png(const std::string& id) const {
    return read_file(find(id)->dir / "source.png");
}

Snapshot ProjectStore::update_points(const std::string& id, const std::vector<Point2>& points,
                                     std::uint64_t expected_revision) {
    const auto e = find(id);
    std::lock_guard lock(e->write_mutex);
    const auto current = std::atomic_load(&e->snapshot);
    if (current->info.revision != expected_revision) throw RevisionConflict(current->info.revision);
    const ControlGrid& old = current->annotation.control;
    if (points.size() != old.size()) {
        throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(old.size()) + " points for a " +
                                                  std::to_string(old.rows()) + "x" +
                                                  std::to_string(old.cols()) + " grid, got " +
                                                  std::to_string(points.size()));
    }
    auto next = std::make_shared<Snapshot>(*current);
    next->annotation.control = ControlGrid(old.rows(), old.cols(), points);  // rejects non-finite
    next->info.revision = current->info.revision + 1;
    next->info.modified = utc_now();
    persist(*e, *next);
    std::atomic_store(&e->snapshot, std::shared_ptr<const Snapshot>(std::move(next)));

    std::error_code ec;
    for (const auto& f : fs::directory_iterator(e->dir / "previews", ec)) fs::remove(f.path(), ec);
    return *std::atomic_load(&e->snapshot);
}

std::string ProjectStore::preview(const std::string& id, Method method, int step, int max_side) {
    if (max_side < 1) throw Error(ErrorCode::InvalidArgument, "max_side must be >= 1");
    const auto e = find(id);
    const auto snap = std::atomic_load(&e->snapshot);
    const auto image = e->image;
    const fs::path cached = e->dir / "previews" / preview_name(snap->info.revision, method, step, max_side);
    std::error_code ec;
    if (fs::exists(cached, ec)) {
        try {
            return read_file(cached);
        } catch (const Error&) {
            // evicted by a concurrent revision bump; recompute
        }
    }

    const AnnotationRecord& a = snap->annotation;
    subsample_grid(a.control, step);  // validates before any image work

    const Size natural = default_output_size(a.reference);
    const double f = std::min(1.0, static_cast<double>(max_side) / std::max(natural.width, natural.height));
    DewarpOptions opts;
    opts.method = method;
    opts.step = step;
    std::string png;
    if (f < 1.0) {
        const Size small{std::max(1, static_cast<int>(std::lround(image->width() * f))),
                         std::max(1, static_cast<int>(std::lround(image->height() * f)))};
        const ControlGrid control = rescale_points(a.control, image->size(), small);
        const ReferenceSpec reference = rescale_reference(a.reference, image->size(), small);
        opts.out_size = Size{std::clamp(static_cast<int>(std::lround(natural.width * f)), 1, max_side),
                             std::clamp(static_cast<int>(std::lround(natural.height * f)), 1, max_side)};
        png = encode_png(dewarp(resize_image(*image, small), control, reference, opts));
    } else {
        png = encode_png(dewarp(*image, a.control, a.reference, opts));
    }
    // Only cache while the revision is still current.
    if (std::atomic_load(&e->snapshot)->info.revision == snap->info.revision) {
        try {
            write_file_atomic(cached, png);
        } catch (const Error&) {
        }
    }
    return png;
}

json ProjectStore::export_project(const std::string& id, bool include_map) const {
    const Snapshot snap = get(id);
    json out = {{"id", snap.info.id}, {"revision", snap.info.revision}, {"annotation", to_json(snap.annotation)}};
    if (include_map) {
        DewarpOptions opts;
        opts.method = snap.info.default_method;
        opts.step = snap.info.default_step;
        const BackwardMap map = dewarp_map(snap.annotation.control, snap.annotation.reference, opts);
        out["map"] = {{"format", "cpbm"},
                      {"encoding", "base64"},
                      {"method", std::string(to_string(opts.method))},
                      {"step", opts.step},
                      {"width", map.width()},
                      {"height", map.height()},
                      {"data", httplib::detail::base64_encode(encode_backward_map(map))}};
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Server::Impl {
    httplib::Server http;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                json extra = json::object()) {
    extra["error"] = code;
    extra["message"] = message;
    send_json(res, status, extra);
}

int status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::Io: return 500;
    case ErrorCode::DegenerateConfiguration:
    case ErrorCode::RetryableDegenerate: return 422;
    default: return 400;
    }
}

template <class F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const RevisionConflict& e) {
        send_error(res, 409, "RevisionConflict", e.what(), {{"current_revision", e.current()}});
    } catch (const NotFound& e) {
        send_error(res, 404, "NotFound", e.what());
    } catch (const Error& e) {
        json extra = json::object();
        if (!e.valid_steps().empty()) extra["valid_steps"] = e.valid_steps();
        send_error(res, status_for(e.code()), to_string(e.code()), e.what(), std::move(extra));
    } catch (const json::exception& e) {
        send_error(res, 400, "Format", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
    }
}

int int_param(const httplib::Request& req, const std::string& key, int fallback) {
    std::string v;
    if (req.has_param(key)) v = req.get_param_value(key);
    else if (req.has_file(key)) v = req.get_file_value(key).content;
    else return fallback;
    try {
        std::size_t used = 0;
        const int n = std::stoi(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::InvalidArgument, key + " must be an integer");
}

std::string text_param(const httplib::Request& req, const std::string& key, std::string fallback) {
    if (req.has_param(key)) return req.get_param_value(key);
    if (req.has_file(key)) return req.get_file_value(key).content;
    return fallback;
}

json project_view(const Snapshot& s) {
    json j = to_json(s.info);
    j["annotation"] = to_json(s.annotation);
    j["valid_steps"] = valid_steps(s.annotation.control.rows(), s.annotation.control.cols());
    return j;
}

std::vector<Point2> points_from_json(const json& pts) {
    if (!pts.is_array()) throw Error(ErrorCode::Format, "points must be an array of [x, y]");
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
            throw Error(ErrorCode::Format, "points must be an array of [x, y]");
        }
        out.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return out;
}

void install_routes(httplib::Server& http, ProjectStore& store) {
    static const std::string id_re = "([A-Za-z0-9]+)";

    http.Get("/projects", [&store](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            json arr = json::array();
            for (const auto& info : store.list()) arr.push_back(to_json(info));
            send_json(res, 200, arr);
        });
    });

    http.Post("/projects", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.is_multipart_form_data() || !req.has_file("image")) {
                throw Error(ErrorCode::InvalidArgument, "expected multipart form with an 'image' part");
            }
            const std::string image = req.get_file_value("image").content;
            const std::string init = text_param(req, "init", "uniform");
            Snapshot snap;
            if (init == "uniform") {
                snap = store.create_uniform(image, int_param(req, "rows", 31), int_param(req, "cols", 31));
            } else if (init == "from-annotation") {
                const std::string text = text_param(req, "annotation", "");
                if (text.empty()) throw Error(ErrorCode::InvalidArgument, "init=from-annotation needs an 'annotation' part");
                snap = store.create_from_annotation(image, annotation_from_json(json::parse(text)));
            } else {
                throw Error(ErrorCode::InvalidArgument, "init must be 'uniform' or 'from-annotation'");
            }
            send_json(res, 201, {{"id", snap.info.id}, {"revision", snap.info.revision}});
        });
    });

    http.Get("/projects/" + id_re, [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, project_view(store.get(req.matches[1]))); });
    });

    http.Put("/projects/" + id_re + "/control-points",
             [&store](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                     const json body = json::parse(req.body);
                     if (!body.is_object() || !body.contains("points") || !body.contains("revision") ||
                         !body["revision"].is_number_unsigned()) {
                         throw Error(ErrorCode::Format, "body must be {\"points\": [[x,y],...], \"revision\": n}");
                     }
                     const Snapshot s = store.update_points(req.matches[1], points_from_json(body["points"]),
                                                            body["revision"].get<std::uint64_t>());
                     send_json(res, 200, project_view(s));
                 });
             });

    http.Get("/projects/" + id_re + "/image", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            res.status = 200;
            res.set_content(store.image_png(req.matches[1]), "image/png");
        });
    });

    http.Get("/projects/" + id_re + "/preview", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string id = req.matches[1];
            const Snapshot s = store.get(id);
            const Method method = req.has_param("method") ? parse_method(req.get_param_value("method"))
                                                          : s.info.default_method;
            const int step = int_param(req, "step", s.info.default_step);
            const int max_side = int_param(req, "max_side", kDefaultPreviewSide);
            res.status = 200;
            res.set_content(store.preview(id, method, step, max_side), "image/png");
        });
    });

    http.Get("/projects/" + id_re + "/export", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string flag = text_param(req, "include_map", "false");
            if (flag != "true" && flag != "false" && flag != "1" && flag != "0") {
                throw Error(ErrorCode::InvalidArgument, "include_map must be true or false");
            }
            send_json(res, 200, store.export_project(req.matches[1], flag == "true" || flag == "1"));
        });
    });
}

}  // namespace

Server::Server(ServerOptions options)
    : options_(std::move(options)),
      store_(std::make_unique<ProjectStore>(options_.root)),
      impl_(std::make_unique<Impl>()) {
    impl_->http.set_payload_max_length(256u << 20);
    // SO_REUSEADDR only: httplib's default also sets SO_REUSEPORT, which lets a
    // second server silently share a port that is already in use.
    impl_->http.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    install_routes(impl_->http, *store_);
}

Server::~Server() { stop(); }

int Server::bind() {
    if (options_.port == 0) {
        port_ = impl_->http.bind_to_any_port(options_.host);
        if (port_ < 0) port_ = 0;
    } else if (impl_->http.bind_to_port(options_.host, options_.port)) {
        port_ = options_.port;
    }
    if (port_ <= 0) {
        throw Error(ErrorCode::Io, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    return port_;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
    if (impl_) impl_->http.stop();
}

}  // namespace cpd::service
