#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "cpdewarp/annotation.hpp"
#include "cpdewarp/dewarp.hpp"
#include "cpdewarp/error.hpp"

namespace cpd::service {

/// Optimistic-concurrency failure; carries the revision the caller should
/// refetch.
class RevisionConflict : public std::runtime_error {
public:
    RevisionConflict(std::uint64_t current)
        : std::runtime_error("revision conflict; current revision is " + std::to_string(current)),
          current_(current) {}
    std::uint64_t current() const noexcept { return current_; }

private:
    std::uint64_t current_;
};

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ProjectInfo {
    std::string id;
    std::uint64_t revision = 0;
    std::string created;   // ISO-8601 UTC
    std::string modified;
    Method default_method = Method::Linear;
    int default_step = 1;
};

nlohmann::json to_json(const ProjectInfo& info);

/// Immutable view of a project at one revision.
struct Snapshot {
    ProjectInfo info;
    AnnotationRecord annotation;
};

/// Control points spread evenly over a w x h image, 2% of each side kept as
/// margin; the reference lattice coincides with the control points.
AnnotationRecord uniform_annotation(Size image_size, int rows, int cols);

/// Directory-backed project store. One sub-directory per project under
/// `root`/projects holding source.png, annotation.json, project.json and a
/// previews/ cache. Everything on disk is written atomically, so the store
/// reloads exactly after a restart.
///
/// Reads return shared snapshots without taking the per-project lock;
/// mutations of one project are serialized.
class ProjectStore {
public:
    explicit ProjectStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    Snapshot create_uniform(std::string_view image_bytes, int rows, int cols);
    /// Stores `record` verbatim; the image must match record.image_size.
    Snapshot create_from_annotation(std::string_view image_bytes, const AnnotationRecord& record);

    std::vector<ProjectInfo> list() const;
    Snapshot get(const std::string& id) const;
    /// PNG bytes of the source image.
    std::string image_png(const std::string& id) const;

    Snapshot update_points(const std::string& id, const std::vector<Point2>& points,
                           std::uint64_t expected_revision);

    /// Rectified PNG whose longest side is at most `max_side`.
    std::string preview(const std::string& id, Method method, int step, int max_side);

    /// {"id", "revision", "annotation"} plus, when include_map, a base64 CPBM
    /// of the backward map computed with the project's defaults.
    nlohmann::json export_project(const std::string& id, bool include_map) const;

private:
    struct Entry {
        std::mutex write_mutex;
        std::shared_ptr<const Snapshot> snapshot;  // atomic_load / atomic_store only
        std::shared_ptr<const ImageBuffer> image;
        std::filesystem::path dir;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    Snapshot insert(std::string_view image_bytes, AnnotationRecord record);
    void persist(const Entry& entry, const Snapshot& snap) const;
    void load_existing();
    std::string new_id();

    std::filesystem::path root_;
    mutable std::shared_mutex index_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> projects_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::filesystem::path root = "cpd_projects";
};

/// HTTP front end over a ProjectStore.
class Server {
public:
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds the socket; returns the bound port. Throws Io on failure.
    int bind();
    /// Serves until stop(). Call bind() first.
    void listen();
    void stop();
    int port() const noexcept { return port_; }
    ProjectStore& store() noexcept { return *store_; }

private:
    struct Impl;
    ServerOptions options_;
    std::unique_ptr<ProjectStore> store_;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace cpd::service
