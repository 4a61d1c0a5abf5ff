#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cmi/data_model.hpp"
#include "cmi/error.hpp"

namespace cmi {

namespace fs = std::filesystem;

namespace {

cv::Mat read_raw(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kData, "file not found: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(ErrorKind::kData, "cannot decode image: " + path.string());
  return m;
}

double max_value(const cv::Mat& m, const fs::path& path) {
  switch (m.depth()) {
    case CV_8U: return 255.0;
    case CV_16U: return 65535.0;
    default:
      fail(ErrorKind::kData, "unsupported bit depth in " + path.string() +
                                 " (expected 8- or 16-bit integers)");
  }
}

// Float32 matrix in [0, 1] with the requested channel count.
cv::Mat to_unit_float(const cv::Mat& m, int channels, const fs::path& path) {
  if (m.channels() != channels) {
    fail(ErrorKind::kData, "format error: " + path.string() + " has " +
                               std::to_string(m.channels()) + " channels, expected " +
                               std::to_string(channels));
  }
  cv::Mat f;
  m.convertTo(f, CV_32F, 1.0 / max_value(m, path));
  if (channels == 3) cv::cvtColor(f, f, cv::COLOR_BGR2RGB);
  return f;
}

cv::Mat resized(const cv::Mat& m, std::array<int64_t, 2> size, int interp) {
  if (m.rows == size[0] && m.cols == size[1]) return m;
  cv::Mat out;
  cv::resize(m, out, cv::Size(static_cast<int>(size[1]), static_cast<int>(size[0])), 0, 0,
             interp);
  return out;
}

// HWC float matrix -> CHW tensor that owns its memory.
torch::Tensor to_tensor(const cv::Mat& m) {
  cv::Mat c = m.isContinuous() ? m : m.clone();
  auto t = torch::from_blob(c.data, {c.rows, c.cols, c.channels()}, torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous().clone();
}

cv::Mat to_mat8(const torch::Tensor& chw, double scale, int type) {
  auto hwc = chw.detach().to(torch::kFloat64).permute({1, 2, 0}).contiguous();
  hwc = (hwc * scale).round().clamp(0.0, scale);
  const auto h = static_cast<int>(hwc.size(0));
  const auto w = static_cast<int>(hwc.size(1));
  const auto c = static_cast<int>(hwc.size(2));
  cv::Mat f(h, w, CV_MAKETYPE(CV_64F, c), hwc.data_ptr<double>());
  cv::Mat out;
  f.convertTo(out, type);
  return out;
}

void write_mat(const cv::Mat& m, const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::kIo, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) fail(ErrorKind::kIo, "cannot write " + path.string());
}

torch::Tensor as_chw(const torch::Tensor& map) {
  return map.dim() == 2 ? map.unsqueeze(0) : map;
}

}  // namespace

RgbdSample load_sample(const ManifestEntry& entry, std::array<int64_t, 2> target_size,
                       bool require_gt) {
  if (require_gt && !entry.gt_path) {
    fail(ErrorKind::kData, "manifest error: entry '" + entry.id +
                               "' has no gt but supervision is required");
  }
  RgbdSample s;
  s.id = entry.id;

  cv::Mat rgb = to_unit_float(read_raw(entry.rgb_path), 3, entry.rgb_path);
  s.source_size = {rgb.rows, rgb.cols};
  s.rgb = to_tensor(resized(rgb, target_size, cv::INTER_LINEAR)).clamp(0.0, 1.0);

  cv::Mat depth = to_unit_float(read_raw(entry.depth_path), 1, entry.depth_path);
  s.depth = to_tensor(resized(depth, target_size, cv::INTER_LINEAR)).clamp(0.0, 1.0);

  if (entry.gt_path) {
    cv::Mat gt = to_unit_float(read_raw(*entry.gt_path), 1, *entry.gt_path);
    auto g = to_tensor(resized(gt, target_size, cv::INTER_NEAREST));
    s.gt = (g >= 0.5).to(torch::kFloat32);
  }
  return s;
}

torch::Tensor read_gray(const fs::path& path) {
  return to_tensor(to_unit_float(read_raw(path), 1, path));
}

void write_gray8(const torch::Tensor& map, const fs::path& path) {
  write_mat(to_mat8(as_chw(map), 255.0, CV_8U), path);
}

void write_gray16(const torch::Tensor& map, const fs::path& path) {
  write_mat(to_mat8(as_chw(map), 65535.0, CV_16U), path);
}

void write_rgb8(const torch::Tensor& rgb, const fs::path& path) {
  cv::Mat m = to_mat8(rgb, 255.0, CV_8UC3);
  cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  write_mat(m, path);
}

}  // namespace cmi
