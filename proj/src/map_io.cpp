#include "cpdewarp/map_io.hpp"

#include <bit>
#include <cstring>

#include "cpdewarp/image_io.hpp"

namespace cpd {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'B', 'M'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]))
             << (8 * i);
    }
    return v;
}

}  // namespace

std::string encode_backward_map(const BackwardMap& map) {
    std::string out;
    out.reserve(kHeaderBytes + map.data().size() * 8);
    out.append(kMagic, 4);
    put_u32(out, kCpbmVersion);
    put_u32(out, static_cast<std::uint32_t>(map.width()));
    put_u32(out, static_cast<std::uint32_t>(map.height()));
    for (const auto& p : map.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p.x)));
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p.y)));
    }
    return out;
}

BackwardMap decode_backward_map(std::string_view bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::Format, "not a CPBM backward map");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kCpbmVersion) {
        throw Error(ErrorCode::Format, "unsupported CPBM version " + std::to_string(version));
    }
    const std::uint32_t w = get_u32(bytes, 8);
    const std::uint32_t h = get_u32(bytes, 12);
    const std::uint64_t count = static_cast<std::uint64_t>(w) * h;
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20) ||
        bytes.size() != kHeaderBytes + count * 8) {
        throw Error(ErrorCode::Format, "CPBM size does not match its header");
    }
    std::vector<Point2> data(count);
    std::size_t at = kHeaderBytes;
    for (auto& p : data) {
        p.x = std::bit_cast<float>(get_u32(bytes, at));
        p.y = std::bit_cast<float>(get_u32(bytes, at + 4));
        at += 8;
    }
    return BackwardMap(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

void write_backward_map(const std::filesystem::path& path, const BackwardMap& map) {
    write_file_atomic(path, encode_backward_map(map));
}

BackwardMap read_backward_map(const std::filesystem::path& path) {
    return decode_backward_map(read_file(path));
}

BackwardMap quantize_to_float(const BackwardMap& map) {
    BackwardMap out = map;
    for (auto& p : out.data()) {
        p = {static_cast<float>(p.x), static_cast<float>(p.y)};
    }
    return out;
}

}  // namespace cpd
