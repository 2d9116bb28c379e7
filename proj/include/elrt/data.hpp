#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "elrt/tensor.hpp"

namespace elrt {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labeled images in N x C x H x W, already scaled (and normalized where the format
/// prescribes it).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  void validate() const;

  /// Images and labels at the given sample indices, in that order.
  std::pair<Tensor, std::vector<int>> gather(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// ---------------------------------------------------------------------------
// MNIST IDX

/// Big-endian IDX image file (magic 0x00000803) -> N x 1 x rows x cols in [0, 1].
Tensor parse_idx_images(std::span<const std::uint8_t> bytes);
/// Big-endian IDX label file (magic 0x00000801).
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Reads {train,t10k}-{images-idx3,labels-idx1}-ubyte from dir, optionally gzip-compressed
/// (a ".gz" suffix is tried when the plain file is absent).
std::pair<Dataset, Dataset> load_mnist(const std::string& dir);

// ---------------------------------------------------------------------------
// CIFAR-10 binary

inline constexpr std::array<float, 3> kCifarMean{0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarStd{0.2470f, 0.2435f, 0.2616f};
inline constexpr std::size_t kCifarRecordBytes = 3073;

/// 3073-byte records (label byte, then 3 x 32 x 32 channel-major pixels). Pixels are
/// scaled to [0, 1]; normalize applies the per-channel mean/std above.
Dataset parse_cifar_records(std::span<const std::uint8_t> bytes, bool normalize = true);

/// data_batch_1..5.bin and test_batch.bin from dir. Each batch must hold 10000 records.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

/// Either format, detected from the directory contents.
std::pair<Dataset, Dataset> load_dataset(const std::string& dir);

/// Whole file, transparently gunzipped.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);

/// Pad-4 random crop and random horizontal flip of a batch (zero padding in the
/// normalized space). Deterministic for a given seed.
Tensor augment_crop_flip(const Tensor& batch, std::uint64_t seed);

}  // namespace elrt
