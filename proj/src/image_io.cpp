#include "semidiff/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "semidiff/errors.hpp"

namespace semidiff::image_io {

namespace fs = std::filesystem;

namespace {

constexpr float kScale16 = 2.0f / 65535.0f;

torch::Tensor chw(const torch::Tensor& image) {
  auto x = image.dim() == 4 ? image.squeeze(0) : image;
  if (x.dim() != 3 || x.size(0) != 3) {
    throw DimensionError("image_io: expected a [3, H, W] image");
  }
  return x.detach().to(torch::kFloat32).contiguous();
}

torch::Tensor codes16(const torch::Tensor& image) {
  return ((image.clamp(-1.0, 1.0) + 1.0f) * (65535.0f / 2.0f)).round();
}

torch::Tensor decode16(const torch::Tensor& codes) { return codes * kScale16 - 1.0f; }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_mat(const fs::path& path, const cv::Mat& rgb) {
  ensure_parent(path);
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) {
    throw PersistenceError("image_io: cannot write " + path.string());
  }
}

}  // namespace

torch::Tensor read_image(const fs::path& path) {
  if (!fs::exists(path)) throw IngestionError("image_io: missing file " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  if (raw.empty()) throw IngestionError("image_io: cannot decode " + path.string());
  cv::Mat rgb;
  cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  const int h = rgb.rows, w = rgb.cols;
  torch::Tensor out;
  if (rgb.depth() == CV_16U) {
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3);
    out = decode16(torch::from_blob(f.data, {h, w, 3}, torch::kFloat32).permute({2, 0, 1}).clone());
  } else if (rgb.depth() == CV_8U) {
    auto bytes = torch::from_blob(rgb.data, {h, w, 3}, torch::kUInt8).permute({2, 0, 1});
    out = bytes.to(torch::kFloat32) / 127.5f - 1.0f;
  } else {
    throw IngestionError("image_io: unsupported pixel depth in " + path.string());
  }
  return out.contiguous();
}

void write_png(const fs::path& path, const torch::Tensor& image) {
  auto x = chw(image);
  auto bytes = ((x.clamp(-1.0, 1.0) + 1.0f) * 127.5f).round().to(torch::kUInt8);
  auto hwc = bytes.permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(x.size(1)), static_cast<int>(x.size(2)), CV_8UC3, hwc.data_ptr());
  write_mat(path, rgb);
}

void write_png16(const fs::path& path, const torch::Tensor& image) {
  auto x = chw(image);
  auto words = codes16(x).to(torch::kInt32).permute({1, 2, 0}).contiguous();
  cv::Mat as_int(static_cast<int>(x.size(1)), static_cast<int>(x.size(2)), CV_32SC3,
                 words.data_ptr());
  cv::Mat rgb;
  as_int.convertTo(rgb, CV_16UC3);
  write_mat(path, rgb);
}

torch::Tensor quantize16(const torch::Tensor& image) { return decode16(codes16(image)); }

}  // namespace semidiff::image_io
