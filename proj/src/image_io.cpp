#include "cpdewarp/image_io.hpp"

#include <fstream>
#include <iterator>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <system_error>

#include "cv_bridge.hpp"

namespace cpd {

namespace fs = std::filesystem;

cv::Mat to_mat(const ImageBuffer& image) {
    const int type = image.channels() == 1 ? CV_8UC1 : CV_8UC3;
    cv::Mat view(image.height(), image.width(), type,
                 const_cast<std::uint8_t*>(image.data().data()));
    return view.clone();
}

ImageBuffer from_mat(const cv::Mat& mat) {
    CV_Assert(mat.type() == CV_8UC1 || mat.type() == CV_8UC3);
    const cv::Mat m = mat.isContinuous() ? mat : mat.clone();
    const auto* p = m.ptr<std::uint8_t>(0);
    std::vector<std::uint8_t> data(p, p + m.total() * m.elemSize());
    return ImageBuffer(m.cols, m.rows, m.channels(), std::move(data));
}

ImageBuffer decode_image(std::string_view bytes) {
    if (bytes.empty()) throw Error(ErrorCode::Format, "empty image payload");
    const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
                      const_cast<char*>(bytes.data()));
    cv::Mat img;
    try {
        img = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception&) {
        img.release();
    }
    if (img.empty()) throw Error(ErrorCode::Format, "could not decode image (PNG or JPEG expected)");
    if (img.depth() == CV_16U) img.convertTo(img, CV_8U, 1.0 / 257.0);
    if (img.depth() != CV_8U) throw Error(ErrorCode::Format, "unsupported image sample depth");
    switch (img.channels()) {
        case 1: break;
        case 3: cv::cvtColor(img, img, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(img, img, cv::COLOR_BGRA2RGB); break;
        default: throw Error(ErrorCode::Format, "unsupported channel count");
    }
    return from_mat(img);
}

ImageBuffer read_image(const fs::path& path) { return decode_image(read_file(path)); }

std::string encode_png(const ImageBuffer& image) {
    cv::Mat m = to_mat(image);
    if (image.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", m, buf)) throw Error(ErrorCode::Format, "PNG encoding failed");
    return std::string(buf.begin(), buf.end());
}

void write_png(const fs::path& path, const ImageBuffer& image) {
    write_file_atomic(path, encode_png(image));
}

ImageBuffer resize_image(const ImageBuffer& image, Size size) {
    if (size.width < 1 || size.height < 1) {
        throw Error(ErrorCode::InvalidResolution, "resize target must be positive");
    }
    if (size == image.size()) return image;
    const bool shrinking = size.width <= image.width() && size.height <= image.height();
    cv::Mat out;
    cv::resize(to_mat(image), out, cv::Size(size.width, size.height), 0, 0,
               shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    return from_mat(out);
}

ImageBuffer to_rgb(const ImageBuffer& image) {
    if (image.channels() == 3) return image;
    ImageBuffer out(image.width(), image.height(), 3);
    for (int i = 0; i < image.height(); ++i) {
        for (int j = 0; j < image.width(); ++j) {
            const std::uint8_t v = *image.pixel(i, j);
            std::uint8_t* o = out.pixel(i, j);
            o[0] = o[1] = o[2] = v;
        }
    }
    return out;
}

std::vector<double> luminance(const ImageBuffer& image) {
    std::vector<double> y(static_cast<std::size_t>(image.width()) *
                          static_cast<std::size_t>(image.height()));
    std::size_t k = 0;
    for (int i = 0; i < image.height(); ++i) {
        for (int j = 0; j < image.width(); ++j, ++k) {
            const std::uint8_t* p = image.pixel(i, j);
            y[k] = image.channels() == 1 ? p[0] : 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        }
    }
    return y;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::Io, "failed reading " + path.string());
    return bytes;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::Io, "failed writing " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace cpd
