#pragma once

// Internal: conversions between ImageBuffer and cv::Mat (deep copies).
#include <opencv2/core.hpp>

#include "cpdewarp/types.hpp"

namespace cpd {

cv::Mat to_mat(const ImageBuffer& image);
ImageBuffer from_mat(const cv::Mat& mat);

}  // namespace cpd
