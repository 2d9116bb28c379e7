#include "elrt/data.hpp"

#include <zlib.h>

#include <filesystem>
#include <random>

namespace elrt {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (images.rank() != 4) throw FormatError("dataset images must be N x C x H x W");
  if (images.dim(0) != labels.size()) {
    throw FormatError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                      std::to_string(labels.size()) + " labels");
  }
  for (const int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw FormatError("label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

std::pair<Tensor, std::vector<int>> Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t per = images.size() / images.dim(0);
  Tensor out(Shape{indices.size(), images.dim(1), images.dim(2), images.dim(3)});
  std::vector<int> out_labels;
  out_labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw std::out_of_range("dataset index " + std::to_string(src) + " out of range");
    std::copy(images.raw() + src * per, images.raw() + (src + 1) * per, out.raw() + i * per);
    out_labels.push_back(labels[src]);
  }
  return {std::move(out), std::move(out_labels)};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  auto [x, y] = gather(indices);
  return Dataset{std::move(x), std::move(y), classes};
}

namespace {

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
         std::uint32_t(b[off + 3]);
}

std::string resolve(const std::string& dir, const std::string& name) {
  const fs::path plain = fs::path(dir) / name;
  if (fs::exists(plain)) return plain.string();
  const fs::path gz = fs::path(dir) / (name + ".gz");
  if (fs::exists(gz)) return gz.string();
  throw FormatError("missing " + plain.string() + " (or .gz)");
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw FormatError("read error in " + path + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

Tensor parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw FormatError("IDX image file shorter than its header");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000803) throw FormatError("bad IDX image magic " + std::to_string(magic));
  const std::size_t n = be32(bytes, 4), rows = be32(bytes, 8), cols = be32(bytes, 12);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError("IDX image file has a zero dimension");
  if (bytes.size() != 16 + n * rows * cols) {
    throw FormatError("IDX image payload is " + std::to_string(bytes.size() - 16) + " bytes, header implies " +
                      std::to_string(n * rows * cols));
  }
  Tensor out(Shape{n, 1, rows, cols});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = float(bytes[16 + i]) / 255.0f;
  return out;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("IDX label file shorter than its header");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != 0x00000801) throw FormatError("bad IDX label magic " + std::to_string(magic));
  const std::size_t n = be32(bytes, 4);
  if (bytes.size() != 8 + n) {
    throw FormatError("IDX label payload is " + std::to_string(bytes.size() - 8) + " bytes, header implies " +
                      std::to_string(n));
  }
  return std::vector<int>(bytes.begin() + 8, bytes.end());
}

std::pair<Dataset, Dataset> load_mnist(const std::string& dir) {
  auto load = [&](const std::string& prefix) {
    Dataset d{parse_idx_images(read_file_bytes(resolve(dir, prefix + "-images-idx3-ubyte"))),
              parse_idx_labels(read_file_bytes(resolve(dir, prefix + "-labels-idx1-ubyte"))), 10};
    d.validate();
    return d;
  };
  return {load("train"), load("t10k")};
}

Dataset parse_cifar_records(std::span<const std::uint8_t> bytes, bool normalize) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR batch size " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                      std::to_string(kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset d{Tensor(Shape{n, 3, 32, 32}), std::vector<int>(n), 10};
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kCifarRecordBytes;
    d.labels[i] = rec[0];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < 1024; ++p) {
        float v = float(rec[1 + c * 1024 + p]) / 255.0f;
        if (normalize) v = (v - kCifarMean[c]) / kCifarStd[c];
        d.images[(i * 3 + c) * 1024 + p] = v;
      }
    }
  }
  d.validate();
  return d;
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
  std::vector<std::uint8_t> train;
  for (int b = 1; b <= 5; ++b) {
    const auto bytes = read_file_bytes(resolve(dir, "data_batch_" + std::to_string(b) + ".bin"));
    if (bytes.size() != 10000 * kCifarRecordBytes) {
      throw FormatError("data_batch_" + std::to_string(b) + ".bin holds " +
                        std::to_string(bytes.size() / kCifarRecordBytes) + " records, expected 10000");
    }
    train.insert(train.end(), bytes.begin(), bytes.end());
  }
  const auto test = read_file_bytes(resolve(dir, "test_batch.bin"));
  if (test.size() != 10000 * kCifarRecordBytes) throw FormatError("test_batch.bin must hold 10000 records");
  return {parse_cifar_records(train), parse_cifar_records(test)};
}

std::pair<Dataset, Dataset> load_dataset(const std::string& dir) {
  const fs::path p(dir);
  if (fs::exists(p / "data_batch_1.bin") || fs::exists(p / "data_batch_1.bin.gz")) return load_cifar10(dir);
  return load_mnist(dir);
}

Tensor augment_crop_flip(const Tensor& batch, std::uint64_t seed) {
  const std::size_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  constexpr long pad = 4;
  std::mt19937_64 rng(seed);
  Tensor out(batch.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const long dy = long(rng() % (2 * pad + 1)) - pad;
    const long dx = long(rng() % (2 * pad + 1)) - pad;
    const bool flip = rng() & 1;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* src = batch.raw() + (i * c + ch) * h * w;
      float* dst = out.raw() + (i * c + ch) * h * w;
      for (long y = 0; y < long(h); ++y) {
        for (long x = 0; x < long(w); ++x) {
          const long sy = y + dy;
          const long sx0 = x + dx;
          const long sx = flip ? long(w) - 1 - sx0 : sx0;
          dst[y * long(w) + x] = (sy < 0 || sy >= long(h) || sx0 < 0 || sx0 >= long(w)) ? 0.0f : src[sy * long(w) + sx];
        }
      }
    }
  }
  return out;
}

}  // namespace elrt
