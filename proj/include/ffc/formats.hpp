#pragma once

// Binary containers. All multi-byte values are little-endian except inside IDX
// files, which are big-endian by definition.
//
//   FFCTENS1  magic[8] | u32 rank | u32 dims[rank] | f64 values[prod(dims)]
//   FFCSPEC1  magic[8] | u32 height | u32 width | u32 channels | (f64 re, f64 im)[...]
//   FFCIMP01  magic[8] | u8 domain | u32 C | u32 H | u32 W | f64 scores[C*H*W]
//   FFCCKPT1  magic[8] | key=value lines (UTF-8) | empty line | f64 parameters[...]

#include <filesystem>
#include <string>
#include <vector>

#include "ffc/data.hpp"
#include "ffc/fourier.hpp"
#include "ffc/importance.hpp"
#include "ffc/nn.hpp"
#include "ffc/tensor.hpp"

namespace ffc {

void save_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor_file(const std::filesystem::path& path);

void save_spectrum_file(const std::filesystem::path& path, const MultiSpectrum& spectrum);
MultiSpectrum load_spectrum_file(const std::filesystem::path& path);

void save_importance_file(const std::filesystem::path& path, const ImportanceMap& map);
ImportanceMap load_importance_file(const std::filesystem::path& path);

/// Canonical key=value rendering of the spec and training metadata.
std::string checkpoint_header(const Checkpoint& model);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& model);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// IDX element types.
enum class IdxType : unsigned char { u8 = 0x08, i8 = 0x09, i16 = 0x0B, i32 = 0x0C, f32 = 0x0D, f64 = 0x0E };

/// Reads an IDX image file. Rank-3 payloads (N,H,W) become [N,1,H,W]; rank-4
/// payloads are kept as [N,C,H,W]. 8-bit unsigned values are rescaled to [0,1].
Tensor load_idx_images(const std::filesystem::path& path);
/// Reads a rank-1 IDX label file.
std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path);
/// Images plus labels. `classes` defaults to max(label) + 1 when zero.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::size_t classes = 0);
/// Label path convention used by the CLI: "name.idx" -> "name-labels.idx".
std::filesystem::path idx_labels_path(const std::filesystem::path& images);

/// Writes [N,C,H,W] samples. f64 payloads are stored exactly; u8 payloads clamp
/// to [0,1] and quantize to 0..255.
void save_idx_images(const std::filesystem::path& path, const Tensor& images, IdxType type = IdxType::f64);
void save_idx_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels);

/// Raw bytes of a binary IDX/FFC stream; exposed for format tests.
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace ffc
