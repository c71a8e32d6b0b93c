#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "graphonomy/taxonomy.hpp"

namespace graphonomy::synth {

// Procedural articulated-figure scenes with pixel-aligned masks at every
// granularity of the taxonomy. Masks come from integer rasterization only, so
// they are bit-identical across platforms; the photometric texture is float.
struct SceneConfig {
    int resolution = 64;
    int figure_count = 2;     // upper bound; each scene draws 1..figure_count
    bool occlusion = false;   // allow the second figure to overlap the first
    double noise_level = 0.05;
};

struct FigurePose {
    int center_x = 0;
    int head_top = 0;
    int neck_y = 0;
    int pelvis_y = 0;
    int scale = 0;
};

struct Sample {
    int height = 0;
    int width = 0;
    std::vector<float> image; // H*W*3, values in [0,1]
    std::map<std::string, std::vector<std::uint8_t>> masks; // dataset -> H*W labels
    std::uint64_t seed = 0;
    std::vector<FigurePose> meta;
};

// Deterministic in (seed, config): identical inputs give bit-identical output.
Sample generate_scene(std::uint64_t seed, const SceneConfig& config,
                      const tax::LabelTaxonomy& taxonomy);

// --- binary portable pixmap codecs ---------------------------------------------

std::vector<std::uint8_t> encode_p6(const std::vector<float>& image, int height, int width);
std::vector<std::uint8_t> encode_p5(const std::vector<std::uint8_t>& mask, int height, int width);

struct DecodedImage {
    int height = 0;
    int width = 0;
    std::vector<float> pixels; // H*W*3 in [0,1]
};

struct DecodedMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;
};

DecodedImage decode_p6(const std::vector<std::uint8_t>& bytes);
DecodedMask decode_p5(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// --- dataset manifests ----------------------------------------------------------

struct ManifestRecord {
    std::string image_path;
    std::string mask_path;
    std::string dataset_id;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::string split;
};

// Line format: image_path<TAB>mask_path<TAB>dataset_id. Every referenced path
// must exist and every dataset must be registered. An empty file is legal and
// warns on `warnings` when provided.
DatasetManifest load_manifest(const std::string& path, const tax::LabelTaxonomy& taxonomy,
                              std::ostream* warnings = nullptr);

void save_manifest(const std::string& path, const DatasetManifest& manifest);

// --- visualization palette --------------------------------------------------------

// Color table for rendered masks: lines "dataset label r g b", '#' comments.
struct Palette {
    std::map<std::string, std::array<std::uint8_t, 3>> colors; // "dataset/label" -> rgb
};

Palette load_palette(const std::string& path, const tax::LabelTaxonomy& taxonomy);

// Mask indices to an RGB image in [0,1]; every label of the dataset must have
// a palette entry.
std::vector<float> colorize_mask(const std::vector<std::uint8_t>& mask, const std::string& dataset,
                                 const tax::LabelTaxonomy& taxonomy, const Palette& palette);

// --- synthetic word embeddings ---------------------------------------------------

// Token vectors built over the label hierarchy: coarse roots are
// orthonormalized, children sit at parent plus orthogonal noise (norm ratio
// 0.3), and a token's vector is the mean over the labels that use it. Cosine
// similarity therefore encodes the hierarchy.
std::string render_embeddings(const tax::LabelTaxonomy& taxonomy, std::uint64_t seed, int dim);
void emit_embeddings(const tax::LabelTaxonomy& taxonomy, std::uint64_t seed, int dim,
                     const std::string& path);

} // namespace graphonomy::synth
