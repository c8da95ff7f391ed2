#pragma once

// Synthetic grayscale task family. The real class is the same for every
// task: a bilinearly smoothed random blob field plus Gaussian pixel noise.
// The fake class of task k adds a diagonal sinusoidal artifact
//   amplitude * sin(2*pi * frequency * (x + y) / H + phase)
// before the final clip to [0, 1]. Pixels are quantised to float32 at
// generation time so in-memory data and the CRD1 file payload are
// bit-identical.
//
// CRD1 layout, little-endian:
//   magic "CRD1" | version u16 | n u32 | H u32 | W u32 | channels u32 (=1)
//   labels u8[n] | pixels f32[n*H*W] row-major
// One file holds one split; write_dataset(stem) emits
// <stem>_train.crd1, <stem>_val.crd1, <stem>_test.crd1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cored/errors.hpp"
#include "cored/network.hpp"
#include "cored/rng.hpp"
#include "cored/tensor.hpp"

namespace cored {

struct RealParams {
  double blob_smoothness = 2.0;  // low-res blob grid spans H / smoothness
  double noise_scale = 0.05;
};

struct FakeParams {
  double frequency = 1.0;
  double phase = 0.0;
  double amplitude = 0.18;
};

struct TaskFamilySpec {
  std::size_t image_size = 8;
  RealParams real;
  std::vector<FakeParams> tasks;  // one entry per task, task ids are 1-based
  std::size_t train_samples = 512;
  std::size_t val_samples = 128;
  std::size_t test_samples = 256;
  std::uint64_t seed = 1;

  void validate() const {
    if (image_size < 4) throw ParameterError("image_size must be at least 4");
    if (tasks.empty()) throw ParameterError("family must define tasks");
    for (std::size_t n : {train_samples, val_samples, test_samples}) {
      if (n < 2) {
        throw ParameterError("every split needs at least 2 samples");
      }
    }
    if (real.noise_scale < 0.0 || real.blob_smoothness <= 0.0) {
      throw ParameterError("invalid real-class parameters");
    }
    for (const FakeParams& f : tasks) {
      if (f.amplitude < 0.0 || f.frequency < 0.0) {
        throw ParameterError("invalid fake-class parameters");
      }
    }
  }

  // frequencies 1..4: distinct, non-aliasing on the diagonal of an 8x8 grid
  static TaskFamilySpec default_family() {
    TaskFamilySpec spec;
    spec.tasks = {FakeParams{1.0, 0.0, 0.18}, FakeParams{2.0, 1.1, 0.18},
                  FakeParams{3.0, 2.2, 0.18}, FakeParams{4.0, 1.5707963267948966, 0.18}};
    return spec;
  }
};

struct TaskDataset {
  std::string task_id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;         // n * H * W, row-major
  std::vector<std::uint8_t> labels;  // 0 = real, 1 = fake
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;

  std::size_t sample_count() const { return labels.size(); }
  std::size_t pixel_count() const { return height * width; }

  void validate() const {
    if (height == 0 || width == 0) throw DataError("empty image extents");
    if (pixels.size() != sample_count() * pixel_count()) {
      throw DataError("pixel payload does not match sample count");
    }
    for (std::uint8_t l : labels) {
      if (l > 1) throw DataError("label outside {0,1}");
    }
    for (float p : pixels) {
      if (!(p >= 0.0f && p <= 1.0f)) {
        throw DataError("pixel outside [0,1]");
      }
    }
    std::vector<char> seen(sample_count(), 0);
    for (const auto* split : {&train_idx, &val_idx, &test_idx}) {
      if (split->empty()) throw DataError("empty split");
      bool has[2] = {false, false};
      for (std::size_t i : *split) {
        if (i >= sample_count()) throw DataError("split index out of range");
        if (seen[i]) throw DataError("splits overlap");
        seen[i] = 1;
        has[labels[i]] = true;
      }
      if (!has[0] || !has[1]) {
        throw DataError("split is missing a class");
      }
    }
    for (char s : seen) {
      if (!s) throw DataError("splits do not cover all samples");
    }
  }

  // [n x H x W] image batch for the given sample indices
  Tensor batch_images(const std::vector<std::size_t>& indices) const {
    Tensor out(Shape{indices.size(), height, width}, 0.0);
    const std::size_t d = pixel_count();
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const float* src = pixels.data() + indices[r] * d;
      double* dst = out.data().data() + r * d;
      for (std::size_t i = 0; i < d; ++i) dst[i] = double(src[i]);
    }
    return out;
  }

  std::vector<std::uint8_t> batch_labels(
      const std::vector<std::size_t>& indices) const {
    std::vector<std::uint8_t> out(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) out[r] = labels[indices[r]];
    return out;
  }
};

// [n x H x W] -> [n x H*W]
inline Tensor flatten_images(const Tensor& images) {
  if (images.ndim() != 3) {
    throw DimensionError("flatten_images expects [N x H x W], got " +
                         detail::shape_str(images.shape()));
  }
  const auto& s = images.shape();
  return Tensor(Shape{s[0], s[1] * s[2]}, images.data());
}

inline Tensor one_hot_labels(const std::vector<std::uint8_t>& labels) {
  Tensor out(Shape{labels.size(), 2}, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw DataError("label outside {0,1}");
    out.data()[i * 2 + labels[i]] = 1.0;
  }
  return out;
}

namespace detail {

// bilinear upsample of a g x g iid standard-normal field, fixed gain
inline void synth_blob(Rng& rng, std::size_t h, std::size_t w,
                       double smoothness, std::vector<double>& out) {
  const std::size_t g = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(double(h) / smoothness)));
  std::vector<double> low(g * g);
  for (auto& v : low) v = rng.normal();
  out.resize(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = h == 1 ? 0.0 : double(y) * double(g - 1) / double(h - 1);
    const std::size_t y0 = std::min<std::size_t>(std::size_t(fy), g - 2);
    const double ty = fy - double(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx =
          w == 1 ? 0.0 : double(x) * double(g - 1) / double(w - 1);
      const std::size_t x0 = std::min<std::size_t>(std::size_t(fx), g - 2);
      const double tx = fx - double(x0);
      const double v00 = low[y0 * g + x0], v01 = low[y0 * g + x0 + 1];
      const double v10 = low[(y0 + 1) * g + x0], v11 = low[(y0 + 1) * g + x0 + 1];
      out[y * w + x] = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                       ty * ((1 - tx) * v10 + tx * v11);
    }
  }
}

constexpr double kBlobGain = 0.15;
constexpr double kTwoPi = 6.283185307179586476925286766559;

inline void synth_sample(Rng& rng, const TaskFamilySpec& spec,
                         const FakeParams* fake, float* dst) {
  const std::size_t h = spec.image_size, w = spec.image_size;
  static thread_local std::vector<double> blob;
  synth_blob(rng, h, w, spec.real.blob_smoothness, blob);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0.5 + kBlobGain * blob[y * w + x] +
                 spec.real.noise_scale * rng.normal();
      if (fake) {
        v += fake->amplitude *
             std::sin(kTwoPi * fake->frequency * double(x + y) / double(h) +
                      fake->phase);
      }
      v = std::clamp(v, 0.0, 1.0);
      dst[y * w + x] = static_cast<float>(v);
    }
  }
}

}  // namespace detail

// Deterministic in (spec.seed, task_index). Layout: splits are contiguous
// [train | val | test]; inside a split the real block precedes the fake
// block. Real samples of every task come from the same distribution (the
// stream differs, the process does not).
inline TaskDataset generate_task(const TaskFamilySpec& spec,
                                 std::size_t task_index) {
  spec.validate();
  if (task_index == 0 || task_index > spec.tasks.size()) {
    throw ParameterError("task index " + std::to_string(task_index) +
                         " outside family of " +
                         std::to_string(spec.tasks.size()) + " tasks");
  }
  const FakeParams& fake = spec.tasks[task_index - 1];

  TaskDataset ds;
  ds.task_id = "task" + std::to_string(task_index);
  ds.height = ds.width = spec.image_size;
  const std::size_t d = ds.pixel_count();
  const std::size_t split_sizes[3] = {spec.train_samples, spec.val_samples,
                                      spec.test_samples};
  std::vector<std::size_t>* splits[3] = {&ds.train_idx, &ds.val_idx,
                                         &ds.test_idx};
  std::size_t next = 0;
  for (int s = 0; s < 3; ++s) {
    const std::size_t n = split_sizes[s];
    const std::size_t n_fake = n / 2;
    const std::size_t n_real = n - n_fake;
    Rng rng(mix_seed(spec.seed, 0xD47A, task_index, std::uint64_t(s)));
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_fake = i >= n_real;
      ds.pixels.resize(ds.pixels.size() + d);
      detail::synth_sample(rng, spec, is_fake ? &fake : nullptr,
                           ds.pixels.data() + next * d);
      ds.labels.push_back(is_fake ? 1 : 0);
      splits[s]->push_back(next);
      ++next;
    }
  }
  ds.validate();
  return ds;
}

// --------------------------------------------------------------------------
// CutMix

struct MixedBatch {
  Tensor images;  // [N x H x W]
  Tensor labels;  // [N x 2] soft labels
};

// Paste a square-ish patch of nominal area (1 - lambda) * H * W from
// source sample src into canvas sample dst. The patch keeps the image
// aspect ratio, is shifted to lie fully inside the image, and the returned
// label weight is recomputed from the actual pasted area (integer rounding
// is what this absorbs).
inline double cutmix_patch(Tensor& canvas, const Tensor& source,
                           std::size_t dst, std::size_t src, double lambda,
                           std::size_t center_y, std::size_t center_x) {
  if (canvas.ndim() != 3 || source.ndim() != 3 ||
      canvas.shape() != source.shape()) {
    throw DimensionError("cutmix_patch expects matching [N x H x W] tensors");
  }
  const std::size_t h = canvas.shape()[1], w = canvas.shape()[2];
  if (dst >= canvas.shape()[0] || src >= canvas.shape()[0] || center_y >= h ||
      center_x >= w) {
    throw ParameterError("cutmix_patch index out of range");
  }
  if (lambda < 0.0 || lambda > 1.0) {
    throw ParameterError("cutmix lambda must lie in [0, 1]");
  }
  const double cut = std::sqrt(1.0 - lambda);
  const std::size_t cut_h =
      std::min<std::size_t>(h, std::size_t(std::llround(cut * double(h))));
  const std::size_t cut_w =
      std::min<std::size_t>(w, std::size_t(std::llround(cut * double(w))));
  if (cut_h == 0 || cut_w == 0) return 1.0;

  const std::size_t y1 =
      std::min(center_y > cut_h / 2 ? center_y - cut_h / 2 : 0, h - cut_h);
  const std::size_t x1 =
      std::min(center_x > cut_w / 2 ? center_x - cut_w / 2 : 0, w - cut_w);

  for (std::size_t y = y1; y < y1 + cut_h; ++y) {
    double* drow = canvas.data().data() + (dst * h + y) * w;
    const double* srow = source.data().data() + (src * h + y) * w;
    for (std::size_t x = x1; x < x1 + cut_w; ++x) drow[x] = srow[x];
  }
  return 1.0 - double(cut_h * cut_w) / double(h * w);
}

// Each sample is mixed with probability mix_probability against a partner
// drawn from a shuffled index vector; lambda ~ U(0,1) per mixed sample.
// mix_probability == 0 returns the batch untouched without consuming rng.
inline MixedBatch cutmix(const Tensor& images, const Tensor& soft_labels,
                         double mix_probability, Rng& rng) {
  if (images.ndim() != 3) {
    throw DimensionError("cutmix expects [N x H x W], got " +
                         detail::shape_str(images.shape()));
  }
  const std::size_t n = images.shape()[0];
  if (n < 2) throw ParameterError("cutmix needs at least 2 samples");
  if (soft_labels.ndim() != 2 || soft_labels.rows() != n ||
      soft_labels.cols() != 2) {
    throw DimensionError("cutmix labels must be [N x 2], got " +
                         detail::shape_str(soft_labels.shape()));
  }
  if (mix_probability < 0.0 || mix_probability > 1.0) {
    throw ParameterError("mix probability must lie in [0, 1]");
  }

  MixedBatch out{images.clone(), soft_labels.clone()};
  if (mix_probability == 0.0) return out;

  const std::size_t h = images.shape()[1], w = images.shape()[2];
  std::vector<std::size_t> partner(n);
  for (std::size_t i = 0; i < n; ++i) partner[i] = i;
  rng.shuffle(partner);

  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() >= mix_probability) continue;
    const double lambda = rng.uniform();
    const std::size_t cy = std::size_t(rng.integer(h));
    const std::size_t cx = std::size_t(rng.integer(w));
    const std::size_t j = partner[i];
    const double lam = cutmix_patch(out.images, images, i, j, lambda, cy, cx);
    for (std::size_t c = 0; c < 2; ++c) {
      out.labels.data()[i * 2 + c] = lam * soft_labels.at(i, c) +
                                     (1.0 - lam) * soft_labels.at(j, c);
    }
  }
  return out;
}

// --------------------------------------------------------------------------
// CRD1 io

struct SampleFile {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;

  Tensor images() const {
    Tensor out(Shape{labels.size(), height, width}, 0.0);
    for (std::size_t i = 0; i < pixels.size(); ++i)
      out.data()[i] = double(pixels[i]);
    return out;
  }
};

namespace detail {

constexpr std::uint16_t kDatasetVersion = 1;

inline void write_samples_impl(const SampleFile& s,
                               const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes.insert(w.bytes.end(), {'C', 'R', 'D', '1'});
  w.u16(kDatasetVersion);
  w.u32(std::uint32_t(s.labels.size()));
  w.u32(std::uint32_t(s.height));
  w.u32(std::uint32_t(s.width));
  w.u32(1);  // channels
  w.bytes.insert(w.bytes.end(), s.labels.begin(), s.labels.end());
  for (float v : s.pixels) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 4; ++i) w.bytes.push_back((bits >> (8 * i)) & 0xff);
  }
  write_file_bytes(path, w.bytes);
}

}  // namespace detail

inline void write_samples(const SampleFile& s,
                          const std::filesystem::path& path) {
  if (s.pixels.size() != s.labels.size() * s.height * s.width) {
    throw DataError("sample payload does not match label count");
  }
  detail::write_samples_impl(s, path);
}

inline SampleFile read_samples(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 4 ||
      !(bytes[0] == 'C' && bytes[1] == 'R' && bytes[2] == 'D' &&
        bytes[3] == '1')) {
    throw FormatError("bad dataset magic", 0);
  }
  detail::ByteReader r{bytes};
  r.pos = 4;
  const std::uint16_t version = r.u16("version");
  if (version != detail::kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version),
                      4);
  }
  const std::uint32_t n = r.u32("sample count");
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t channels = r.u32("channels");
  if (channels != 1) {
    throw FormatError("expected 1 channel, got " + std::to_string(channels),
                      18);
  }
  if (n == 0 || h == 0 || w == 0) {
    throw FormatError("empty dataset extents", 6);
  }
  SampleFile s;
  s.height = h;
  s.width = w;
  s.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.pos;
    r.need(1, "labels");
    s.labels[i] = bytes[r.pos++];
    if (s.labels[i] > 1) {
      throw FormatError("label byte outside {0,1}", at);
    }
  }
  s.pixels.resize(std::size_t(n) * h * w);
  for (auto& v : s.pixels) {
    r.need(4, "pixels");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t(bytes[r.pos + i]) << (8 * i);
    r.pos += 4;
    std::memcpy(&v, &bits, sizeof v);
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError("pixel outside [0,1] in " + path.string());
    }
  }
  if (r.pos != bytes.size()) {
    throw FormatError("trailing bytes after dataset payload", r.pos);
  }
  return s;
}

inline std::filesystem::path split_path(const std::filesystem::path& stem,
                                        const char* split) {
  std::filesystem::path p = stem;
  p += std::string("_") + split + ".crd1";
  return p;
}

inline void write_dataset(const TaskDataset& ds,
                          const std::filesystem::path& stem) {
  ds.validate();
  const std::vector<std::size_t>* splits[3] = {&ds.train_idx, &ds.val_idx,
                                               &ds.test_idx};
  const char* names[3] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    SampleFile f;
    f.height = ds.height;
    f.width = ds.width;
    const std::size_t d = ds.pixel_count();
    for (std::size_t i : *splits[s]) {
      f.labels.push_back(ds.labels[i]);
      f.pixels.insert(f.pixels.end(), ds.pixels.begin() + i * d,
                      ds.pixels.begin() + (i + 1) * d);
    }
    write_samples(f, split_path(stem, names[s]));
  }
}

inline TaskDataset read_dataset(const std::filesystem::path& stem) {
  TaskDataset ds;
  ds.task_id = stem.filename().string();
  const char* names[3] = {"train", "val", "test"};
  std::vector<std::size_t>* splits[3] = {&ds.train_idx, &ds.val_idx,
                                         &ds.test_idx};
  std::size_t next = 0;
  for (int s = 0; s < 3; ++s) {
    SampleFile f = read_samples(split_path(stem, names[s]));
    if (s == 0) {
      ds.height = f.height;
      ds.width = f.width;
    } else if (f.height != ds.height || f.width != ds.width) {
      throw DataError("split image extents disagree under " + stem.string());
    }
    ds.pixels.insert(ds.pixels.end(), f.pixels.begin(), f.pixels.end());
    for (std::uint8_t l : f.labels) {
      ds.labels.push_back(l);
      splits[s]->push_back(next++);
    }
  }
  ds.validate();
  return ds;
}

// Balanced merge for simultaneous learning: per split and class, both
// inputs are truncated to the smaller count, so each task contributes
// equally and both classes stay present.
inline TaskDataset merge_balanced(const TaskDataset& a, const TaskDataset& b) {
  a.validate();
  b.validate();
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("merge_balanced: image extents disagree");
  }
  TaskDataset out;
  out.task_id = a.task_id + "+" + b.task_id;
  out.height = a.height;
  out.width = a.width;
  const std::size_t d = a.pixel_count();

  const std::vector<std::size_t>* in_a[3] = {&a.train_idx, &a.val_idx,
                                             &a.test_idx};
  const std::vector<std::size_t>* in_b[3] = {&b.train_idx, &b.val_idx,
                                             &b.test_idx};
  std::vector<std::size_t>* outs[3] = {&out.train_idx, &out.val_idx,
                                       &out.test_idx};
  std::size_t next = 0;
  auto copy_sample = [&](const TaskDataset& src, std::size_t i, int split) {
    out.pixels.insert(out.pixels.end(), src.pixels.begin() + i * d,
                      src.pixels.begin() + (i + 1) * d);
    out.labels.push_back(src.labels[i]);
    outs[split]->push_back(next++);
  };
  for (int s = 0; s < 3; ++s) {
    for (std::uint8_t cls = 0; cls < 2; ++cls) {
      std::vector<std::size_t> ia, ib;
      for (std::size_t i : *in_a[s])
        if (a.labels[i] == cls) ia.push_back(i);
      for (std::size_t i : *in_b[s])
        if (b.labels[i] == cls) ib.push_back(i);
      const std::size_t take = std::min(ia.size(), ib.size());
      for (std::size_t k = 0; k < take; ++k) copy_sample(a, ia[k], s);
      for (std::size_t k = 0; k < take; ++k) copy_sample(b, ib[k], s);
    }
  }
  out.validate();
  return out;
}

}  // namespace cored
