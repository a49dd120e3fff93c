#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "cpdewarp/types.hpp"

namespace cpd {

inline constexpr int kAnnotationVersion = 1;

struct Provenance {
    std::uint64_t seed = 0;
    std::string source;
    friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Interchange unit shared by the dataset, CLI and annotation service.
///
/// JSON form:
///   {"version":1, "image":"<relative path>", "image_size":[w,h],
///    "grid":{"rows":R,"cols":C}, "control_points":[[x,y],...],
///    "reference":{"v_interval":f,"h_interval":f,"origin":[x,y]},
///    "provenance":{"seed":u64,"source":"<id>"}}
struct AnnotationRecord {
    std::string image;
    Size image_size;
    ControlGrid control;
    ReferenceSpec reference;
    Provenance provenance;

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

nlohmann::json to_json(const AnnotationRecord& record);

/// Validates the schema; throws Format on any violation.
AnnotationRecord annotation_from_json(const nlohmann::json& j);

AnnotationRecord read_annotation(const std::filesystem::path& path);
void write_annotation(const std::filesystem::path& path, const AnnotationRecord& record);

}  // namespace cpd
