#include "semidiff/quality.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/random.hpp"

namespace semidiff::warehouse {

namespace {

torch::Tensor as_chw(const torch::Tensor& image) {
  auto x = image.dim() == 4 ? image.squeeze(0) : image;
  if (x.dim() != 3) throw DimensionError("quality: expected a [C, H, W] image");
  return x.detach().to(torch::kFloat32).contiguous();
}

}  // namespace

double ProxyScorer::gradient_term(const torch::Tensor& image) {
  auto x = as_chw(image);
  const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
  const float* p = x.data_ptr<float>();
  double sx = 0.0, sy = 0.0;
  int64_t nx = 0, ny = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* plane = p + ch * h * w;
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < w; ++j) {
        const double v = plane[i * w + j];
        if (j + 1 < w) {
          const double d = plane[i * w + j + 1] - v;
          sx += d * d;
          ++nx;
        }
        if (i + 1 < h) {
          const double d = plane[(i + 1) * w + j] - v;
          sy += d * d;
          ++ny;
        }
      }
    }
  }
  const double mx = nx ? sx / static_cast<double>(nx) : 0.0;
  const double my = ny ? sy / static_cast<double>(ny) : 0.0;
  return std::sqrt(mx + my);
}

double ProxyScorer::median_residual_term(const torch::Tensor& image) {
  auto x = as_chw(image);
  const int64_t c = x.size(0), h = x.size(1), w = x.size(2);
  const float* p = x.data_ptr<float>();
  double acc = 0.0;
  std::array<float, 9> window{};
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* plane = p + ch * h * w;
    for (int64_t i = 0; i < h; ++i) {
      for (int64_t j = 0; j < w; ++j) {
        size_t k = 0;
        for (int64_t di = -1; di <= 1; ++di) {
          for (int64_t dj = -1; dj <= 1; ++dj) {
            const int64_t ii = std::clamp<int64_t>(i + di, 0, h - 1);
            const int64_t jj = std::clamp<int64_t>(j + dj, 0, w - 1);
            window[k++] = plane[ii * w + jj];
          }
        }
        std::nth_element(window.begin(), window.begin() + 4, window.end());
        const double r = static_cast<double>(plane[i * w + j]) - window[4];
        acc += r * r;
      }
    }
  }
  const auto n = static_cast<double>(c * h * w);
  return n > 0 ? std::sqrt(acc / n) : 0.0;
}

double ProxyScorer::score(const torch::Tensor& image) {
  return gradient_term(image) - noise_weight_ * median_residual_term(image);
}

double CommandScorer::score(const torch::Tensor& image) {
  namespace fs = std::filesystem;
  static uint64_t counter = 0;
  const auto path = fs::temp_directory_path() /
                    ("semidiff_score_" + std::to_string(splitmix64(++counter)) + ".png");
  image_io::write_png(path, as_chw(image));
  const std::string cmd = command_ + " '" + path.string() + "'";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) {
    fs::remove(path);
    throw Error("scorer", "cannot run scorer command: " + command_);
  }
  std::string out;
  std::array<char, 256> buf{};
  while (fgets(buf.data(), static_cast<int>(buf.size()), pipe.get()) != nullptr) out += buf.data();
  pipe.reset();
  fs::remove(path);
  try {
    return std::stod(out);
  } catch (const std::exception&) {
    throw Error("scorer", "scorer command produced no number: '" + out + "'");
  }
}

}  // namespace semidiff::warehouse
