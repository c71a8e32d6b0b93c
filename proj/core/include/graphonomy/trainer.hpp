#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "graphonomy/metrics.hpp"
#include "graphonomy/model.hpp"
#include "graphonomy/rng.hpp"
#include "graphonomy/synthdata.hpp"

namespace graphonomy::train {

struct TrainConfig {
    double base_lr = 0.007;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double poly_power = 0.9;
    int batch_size = 8;
    int epochs = 4;
    std::int64_t max_steps = 0; // 0: derived from epochs and dataset size
    double scale_min = 0.5;
    double scale_max = 2.0;
    double flip_prob = 0.5;
    bool augment = true;
    int resolution = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (base_lr <= 0) throw ConfigError("train: base_lr must be positive");
        if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
        if (poly_power <= 0) throw ConfigError("train: poly_power must be positive");
        if (batch_size <= 0) throw ConfigError("train: batch_size must be positive");
        if (scale_min <= 0 || scale_max < scale_min) throw ConfigError("train: bad scale range");
    }
};

// base_lr * (1 - step/max_steps)^poly_power
inline double poly_lr(std::int64_t step, std::int64_t max_steps, const TrainConfig& config) {
    if (step < 0 || step > max_steps)
        throw UsageError("poly_lr: step " + std::to_string(step) + " outside [0," +
                         std::to_string(max_steps) + "]");
    return config.base_lr *
           std::pow(1.0 - static_cast<double>(step) / static_cast<double>(max_steps),
                    config.poly_power);
}

// --- samples and augmentation ---------------------------------------------------

// A training record: the decoded sample plus the dataset whose granularity it
// is annotated for.
struct LoadedSample {
    synth::Sample sample;
    std::string dataset_id;
};

namespace detail {

inline std::vector<float> resize_bilinear_image(const std::vector<float>& src, int h, int w,
                                                int ho, int wo) {
    std::vector<float> dst(static_cast<std::size_t>(ho) * static_cast<std::size_t>(wo) * 3);
    const double ry = static_cast<double>(h) / ho;
    const double rx = static_cast<double>(w) / wo;
    for (int y = 0; y < ho; ++y) {
        double sy = (y + 0.5) * ry - 0.5;
        sy = std::max(0.0, std::min(sy, static_cast<double>(h - 1)));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, h - 1);
        const float ty = static_cast<float>(sy - y0);
        for (int x = 0; x < wo; ++x) {
            double sx = (x + 0.5) * rx - 0.5;
            sx = std::max(0.0, std::min(sx, static_cast<double>(w - 1)));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, w - 1);
            const float tx = static_cast<float>(sx - x0);
            for (int c = 0; c < 3; ++c) {
                auto at = [&](int yy, int xx) {
                    return src[(static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) +
                                static_cast<std::size_t>(xx)) * 3 + static_cast<std::size_t>(c)];
                };
                dst[(static_cast<std::size_t>(y) * static_cast<std::size_t>(wo) +
                     static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)] =
                    (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                    ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
            }
        }
    }
    return dst;
}

inline std::vector<std::uint8_t> resize_nearest_mask(const std::vector<std::uint8_t>& src, int h,
                                                     int w, int ho, int wo) {
    std::vector<std::uint8_t> dst(static_cast<std::size_t>(ho) * static_cast<std::size_t>(wo));
    for (int y = 0; y < ho; ++y) {
        const int sy = std::min(h - 1, static_cast<int>((static_cast<std::int64_t>(y) * h) / ho));
        for (int x = 0; x < wo; ++x) {
            const int sx = std::min(w - 1, static_cast<int>((static_cast<std::int64_t>(x) * w) / wo));
            dst[static_cast<std::size_t>(y) * static_cast<std::size_t>(wo) +
                static_cast<std::size_t>(x)] =
                src[static_cast<std::size_t>(sy) * static_cast<std::size_t>(w) +
                    static_cast<std::size_t>(sx)];
        }
    }
    return dst;
}

// Finest-granularity mask present in the sample, by taxonomy order.
inline std::string finest_mask_id(const synth::Sample& sample, const tax::LabelTaxonomy& taxonomy) {
    for (auto it = taxonomy.datasets.rbegin(); it != taxonomy.datasets.rend(); ++it)
        if (sample.masks.count(it->id)) return it->id;
    throw DataError("sample has no mask registered in the taxonomy");
}

} // namespace detail

inline synth::Sample flip_horizontal(const synth::Sample& sample) {
    synth::Sample out = sample;
    const int h = sample.height, w = sample.width;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out.image[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3 +
                          static_cast<std::size_t>(c)] =
                    sample.image[(static_cast<std::size_t>(y) * w +
                                  static_cast<std::size_t>(w - 1 - x)) * 3 +
                                 static_cast<std::size_t>(c)];
    for (auto& [ds, mask] : out.masks)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
                    sample.masks.at(ds)[static_cast<std::size_t>(y) * w +
                                        static_cast<std::size_t>(w - 1 - x)];
    return out;
}

// Random resize in [scale_min, scale_max], crop or background-pad to the
// training resolution, horizontal flip. Geometry is applied to the image and
// the finest mask; coarser masks are re-derived through the hierarchy so the
// sample stays exactly consistent.
inline synth::Sample augment(const synth::Sample& sample, const TrainConfig& config,
                             rng::Stream& stream, const tax::LabelTaxonomy& taxonomy) {
    const int res = config.resolution;
    const double factor = stream.uniform(config.scale_min, config.scale_max);
    const int sh = std::max(1, static_cast<int>(std::lround(sample.height * factor)));
    const int sw = std::max(1, static_cast<int>(std::lround(sample.width * factor)));

    const std::string fine_id = detail::finest_mask_id(sample, taxonomy);
    std::vector<float> image = (sh == sample.height && sw == sample.width)
                                   ? sample.image
                                   : detail::resize_bilinear_image(sample.image, sample.height,
                                                                   sample.width, sh, sw);
    std::vector<std::uint8_t> fine =
        (sh == sample.height && sw == sample.width)
            ? sample.masks.at(fine_id)
            : detail::resize_nearest_mask(sample.masks.at(fine_id), sample.height, sample.width, sh,
                                          sw);

    // Crop when large, pad with background (label 0, black pixels) when short.
    const int off_y_range = std::abs(sh - res);
    const int off_x_range = std::abs(sw - res);
    const int oy = off_y_range ? stream.uniform_int(0, off_y_range) : 0;
    const int ox = off_x_range ? stream.uniform_int(0, off_x_range) : 0;

    synth::Sample out;
    out.seed = sample.seed;
    out.meta = sample.meta;
    out.height = out.width = res;
    out.image.assign(static_cast<std::size_t>(res) * res * 3, 0.0f);
    std::vector<std::uint8_t> out_fine(static_cast<std::size_t>(res) * res, 0);
    for (int y = 0; y < res; ++y) {
        const int sy = sh >= res ? y + oy : y - oy;
        if (sy < 0 || sy >= sh) continue;
        for (int x = 0; x < res; ++x) {
            const int sx = sw >= res ? x + ox : x - ox;
            if (sx < 0 || sx >= sw) continue;
            for (int ch = 0; ch < 3; ++ch)
                out.image[(static_cast<std::size_t>(y) * res + static_cast<std::size_t>(x)) * 3 +
                          static_cast<std::size_t>(ch)] =
                    image[(static_cast<std::size_t>(sy) * sw + static_cast<std::size_t>(sx)) * 3 +
                          static_cast<std::size_t>(ch)];
            out_fine[static_cast<std::size_t>(y) * res + static_cast<std::size_t>(x)] =
                fine[static_cast<std::size_t>(sy) * sw + static_cast<std::size_t>(sx)];
        }
    }
    out.masks[fine_id] = std::move(out_fine);

    // Re-derive every coarser mask the sample carried.
    for (const auto& [ds, mask] : sample.masks) {
        (void)mask;
        if (ds == fine_id) continue;
        const auto mapping = tax::hierarchy_projection(taxonomy, fine_id, ds);
        const auto& f = out.masks.at(fine_id);
        std::vector<std::uint8_t> m(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) m[i] = static_cast<std::uint8_t>(mapping[f[i]]);
        out.masks[ds] = std::move(m);
    }

    if (stream.next_double() < config.flip_prob) out = flip_horizontal(out);
    return out;
}

// --- batches and steps ------------------------------------------------------------

template <typename S>
struct Batch {
    seg::FeatureMap<S> image;
    std::vector<std::int64_t> labels; // B*H*W at the batch dataset's granularity
    std::string dataset_id;
};

template <typename S>
Batch<S> make_batch(const std::vector<const LoadedSample*>& samples) {
    if (samples.empty()) throw UsageError("make_batch: empty batch");
    const std::string& ds = samples.front()->dataset_id;
    for (const auto* s : samples)
        if (s->dataset_id != ds)
            throw UsageError("make_batch: mixed datasets '" + ds + "' and '" + s->dataset_id + "'");
    const int h = samples.front()->sample.height;
    const int w = samples.front()->sample.width;
    const std::int64_t b = static_cast<std::int64_t>(samples.size());
    std::vector<S> pixels;
    pixels.reserve(static_cast<std::size_t>(b * h * w * 3));
    std::vector<std::int64_t> labels;
    labels.reserve(static_cast<std::size_t>(b * h * w));
    for (const auto* s : samples) {
        if (s->sample.height != h || s->sample.width != w)
            throw UsageError("make_batch: mixed resolutions in one batch");
        for (float v : s->sample.image) pixels.push_back(static_cast<S>(v));
        const auto& mask = s->sample.masks.at(ds);
        for (std::uint8_t m : mask) labels.push_back(static_cast<std::int64_t>(m));
    }
    return {seg::make_feature_map(num::Tensor<S>::from({b * h * w, 3}, std::move(pixels)), b, h, w),
            std::move(labels), ds};
}

// One optimization step on a same-dataset batch: forward, cross-entropy
// against the batch granularity, backward, SGD update at the poly rate.
// The zero-rate final step leaves parameters bitwise unchanged.
template <typename S>
S train_step(model::ParsingModel<S>& m, const Batch<S>& batch, const TrainConfig& config,
             std::int64_t step, std::int64_t max_steps) {
    seg::FeatureMap<S> logits = m.forward(batch.image, batch.dataset_id);
    num::Tensor<S> loss = num::cross_entropy(logits.values, batch.labels);
    if (!std::isfinite(static_cast<double>(loss.item())))
        throw NumericError("train_step: non-finite loss at step " + std::to_string(step));
    m.params().zero_grad();
    num::backward(loss);
    const double lr = poly_lr(step, max_steps, config);
    if (lr > 0)
        num::sgd_step(m.params(), static_cast<S>(lr), static_cast<S>(config.momentum),
                      static_cast<S>(config.weight_decay));
    return loss.item();
}

// --- scheduling ---------------------------------------------------------------------

// Per-step dataset choice, proportional to dataset sizes, deterministic in
// the seed.
inline std::vector<std::string> universal_schedule(
    const std::map<std::string, std::size_t>& dataset_sizes, std::uint64_t seed,
    std::int64_t steps) {
    if (dataset_sizes.empty()) throw ConfigError("universal_schedule: no datasets");
    std::vector<std::pair<std::string, std::size_t>> entries(dataset_sizes.begin(),
                                                             dataset_sizes.end());
    std::size_t total = 0;
    for (const auto& [ds, n] : entries) {
        if (n == 0) throw ConfigError("universal_schedule: dataset '" + ds + "' is empty");
        total += n;
    }
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t i = 0; i < steps; ++i) {
        rng::Stream s(seed, "schedule", static_cast<std::uint64_t>(i));
        std::size_t pick = s.next_below(total);
        for (const auto& [ds, n] : entries) {
            if (pick < n) {
                out.push_back(ds);
                break;
            }
            pick -= n;
        }
    }
    return out;
}

// Seeded per-epoch permutation cursor over one dataset's sample indices.
class SampleCursor {
public:
    SampleCursor(std::string dataset_id, std::size_t size, std::uint64_t seed)
        : dataset_id_(std::move(dataset_id)), size_(size), seed_(seed) {
        if (size_ == 0) throw ConfigError("sample cursor over empty dataset '" + dataset_id_ + "'");
        reshuffle();
    }

    std::size_t next() {
        if (pos_ == order_.size()) {
            ++epoch_;
            reshuffle();
        }
        return order_[pos_++];
    }

private:
    void reshuffle() {
        order_.resize(size_);
        for (std::size_t i = 0; i < size_; ++i) order_[i] = i;
        rng::Stream s(seed_, "order/" + dataset_id_, epoch_);
        for (std::size_t i = size_; i > 1; --i)
            std::swap(order_[i - 1], order_[s.next_below(i)]);
        pos_ = 0;
    }

    std::string dataset_id_;
    std::size_t size_;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

// --- checkpoints ----------------------------------------------------------------------

// Binary layout: magic "GRFY", u32 version=1, u32 tensor count, then per
// tensor u16 name length, UTF-8 name, u8 rank, u32 dims, little-endian f32
// payload row-major. Tensors are sorted by name so a save is a pure function
// of the model state. The step counter and the config echo ride along as
// "meta/step" and "meta/config" (one byte per float).
inline constexpr char kCheckpointMagic[4] = {'G', 'R', 'F', 'Y'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    num::Shape shape;
    std::vector<float> data;
};

struct CheckpointData {
    std::uint32_t version = kCheckpointVersion;
    std::map<std::string, CheckpointTensor> tensors; // sorted by name
};

struct LoadReport {
    std::vector<std::string> fresh;  // model parameters absent from the file
    std::vector<std::string> unused; // file tensors the model did not consume
    std::int64_t step = 0;
    std::string config_echo;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos, const char* what) {
    if (pos + sizeof(T) > in.size())
        throw ParseError("checkpoint: truncated while reading " + std::string(what) +
                         " at byte offset " + std::to_string(pos));
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace detail

inline std::string serialize_checkpoint(const CheckpointData& data) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    detail::put<std::uint32_t>(out, data.version);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(data.tensors.size()));
    for (const auto& [name, tensor] : data.tensors) {
        detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.append(name);
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.shape.size()));
        for (auto d : tensor.shape) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (float v : tensor.data) detail::put<float>(out, v);
    }
    return out;
}

inline CheckpointData parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw ParseError("checkpoint: bad magic");
    pos = 4;
    CheckpointData data;
    data.version = detail::take<std::uint32_t>(bytes, pos, "version");
    if (data.version != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(data.version));
    const std::uint32_t count = detail::take<std::uint32_t>(bytes, pos, "tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = detail::take<std::uint16_t>(bytes, pos, "name length");
        if (pos + name_len > bytes.size())
            throw ParseError("checkpoint: truncated while reading name at byte offset " +
                             std::to_string(pos));
        std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
        pos += name_len;
        const std::uint8_t rank = detail::take<std::uint8_t>(bytes, pos, "rank");
        CheckpointTensor tensor;
        std::int64_t numel = 1;
        for (std::uint8_t r = 0; r < rank; ++r) {
            const std::uint32_t d = detail::take<std::uint32_t>(bytes, pos, "dimension");
            tensor.shape.push_back(static_cast<std::int64_t>(d));
            numel *= d;
        }
        tensor.data.resize(static_cast<std::size_t>(numel));
        for (std::int64_t i = 0; i < numel; ++i)
            tensor.data[static_cast<std::size_t>(i)] = detail::take<float>(bytes, pos, "payload");
        if (data.tensors.count(name))
            throw ParseError("checkpoint: duplicate tensor '" + name + "'");
        data.tensors.emplace(std::move(name), std::move(tensor));
    }
    return data;
}

template <typename S>
CheckpointData build_checkpoint(const num::ParameterStore<S>& params, std::int64_t step,
                                const std::string& config_echo) {
    CheckpointData data;
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto& p = params[i];
        CheckpointTensor value{p.value.shape(), {}};
        value.data.reserve(static_cast<std::size_t>(p.value.size()));
        for (S v : p.value.values()) value.data.push_back(static_cast<float>(v));
        data.tensors.emplace(p.name, std::move(value));

        CheckpointTensor buf{p.momentum_buffer.shape(), {}};
        buf.data.reserve(static_cast<std::size_t>(p.momentum_buffer.size()));
        for (S v : p.momentum_buffer.values()) buf.data.push_back(static_cast<float>(v));
        data.tensors.emplace("optimizer/" + p.name, std::move(buf));
    }
    data.tensors.emplace("meta/step",
                         CheckpointTensor{{1}, {static_cast<float>(step)}});
    CheckpointTensor config{{std::max<std::int64_t>(1, static_cast<std::int64_t>(config_echo.size()))},
                            {}};
    if (config_echo.empty()) config.data.push_back(0.0f);
    for (unsigned char c : config_echo) config.data.push_back(static_cast<float>(c));
    data.tensors.emplace("meta/config", std::move(config));
    return data;
}

template <typename S>
void save_checkpoint(const num::ParameterStore<S>& params, std::int64_t step,
                     const std::string& config_echo, const std::string& path) {
    const std::string bytes = serialize_checkpoint(build_checkpoint(params, step, config_echo));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to checkpoint '" + path + "'");
}

inline CheckpointData read_checkpoint(const std::string& path) {
    return parse_checkpoint(synth::read_binary_file(path));
}

// Applies by name: matching tensors are copied, parameters missing from the
// file keep their fresh initialization and are reported, file tensors the
// model does not own are reported but not fatal (this is what allows loading
// a smaller model's checkpoint into one with added label graphs).
template <typename S>
LoadReport apply_checkpoint(num::ParameterStore<S>& params, const CheckpointData& data) {
    LoadReport report;
    std::vector<std::string> consumed;
    auto copy_into = [](num::Tensor<S>& dst, const CheckpointTensor& src, const std::string& name) {
        if (dst.shape() != src.shape)
            throw DataError("checkpoint: shape mismatch for '" + name + "': model " +
                            num::shape_str(dst.shape()) + " vs file " + num::shape_str(src.shape));
        auto& v = dst.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<S>(src.data[i]);
    };
    for (std::size_t i = 0; i < params.count(); ++i) {
        auto& p = params[i];
        auto it = data.tensors.find(p.name);
        if (it == data.tensors.end()) {
            report.fresh.push_back(p.name);
            continue;
        }
        copy_into(p.value, it->second, p.name);
        consumed.push_back(p.name);
        auto buf = data.tensors.find("optimizer/" + p.name);
        if (buf != data.tensors.end()) {
            copy_into(p.momentum_buffer, buf->second, "optimizer/" + p.name);
            consumed.push_back("optimizer/" + p.name);
        }
    }
    auto step = data.tensors.find("meta/step");
    if (step != data.tensors.end() && !step->second.data.empty())
        report.step = static_cast<std::int64_t>(step->second.data[0]);
    auto config = data.tensors.find("meta/config");
    if (config != data.tensors.end())
        for (float c : config->second.data)
            if (c > 0) report.config_echo.push_back(static_cast<char>(c));
    for (const auto& [name, tensor] : data.tensors) {
        (void)tensor;
        if (name == "meta/step" || name == "meta/config") continue;
        if (std::find(consumed.begin(), consumed.end(), name) == consumed.end())
            report.unused.push_back(name);
    }
    return report;
}

// --- training loop -----------------------------------------------------------------

struct TrainResult {
    std::vector<double> losses;
    std::int64_t steps = 0;
};

// Joint loop over one or more datasets: one dataset per batch, chosen by the
// proportional schedule; within a dataset, samples follow seeded per-epoch
// permutations. Log lines: step<TAB>dataset<TAB>lr<TAB>loss.
template <typename S>
TrainResult train_loop(model::ParsingModel<S>& m,
                       const std::map<std::string, std::vector<LoadedSample>>& data,
                       const TrainConfig& config, std::ostream* log = nullptr) {
    config.validate();
    std::map<std::string, std::size_t> sizes;
    std::size_t total = 0;
    for (const auto& [ds, samples] : data) {
        if (samples.empty()) throw ConfigError("train_loop: dataset '" + ds + "' is empty");
        sizes[ds] = samples.size();
        total += samples.size();
    }
    const std::int64_t steps_per_epoch =
        static_cast<std::int64_t>((total + config.batch_size - 1) / config.batch_size);
    const std::int64_t max_steps =
        config.max_steps > 0 ? config.max_steps : steps_per_epoch * config.epochs;

    const auto schedule = universal_schedule(sizes, config.seed, max_steps);
    std::map<std::string, SampleCursor> cursors;
    for (const auto& [ds, n] : sizes) cursors.emplace(ds, SampleCursor(ds, n, config.seed));

    TrainResult result;
    result.steps = max_steps;
    std::vector<LoadedSample> holding(static_cast<std::size_t>(config.batch_size));
    for (std::int64_t step = 0; step < max_steps; ++step) {
        const std::string& ds = schedule[static_cast<std::size_t>(step)];
        const auto& pool = data.at(ds);
        auto& cursor = cursors.at(ds);
        std::vector<const LoadedSample*> batch;
        for (int i = 0; i < config.batch_size; ++i) {
            const LoadedSample& picked = pool[cursor.next()];
            if (config.augment) {
                rng::Stream stream(config.seed, "augment",
                                   static_cast<std::uint64_t>(step) * config.batch_size +
                                       static_cast<std::uint64_t>(i));
                holding[static_cast<std::size_t>(i)] =
                    LoadedSample{augment(picked.sample, config, stream, m.taxonomy()), ds};
            } else {
                holding[static_cast<std::size_t>(i)] = picked;
            }
            batch.push_back(&holding[static_cast<std::size_t>(i)]);
        }
        const S loss = train_step(m, make_batch<S>(batch), config, step, max_steps);
        result.losses.push_back(static_cast<double>(loss));
        if (log)
            (*log) << step << "\t" << ds << "\t" << poly_lr(step, max_steps, config) << "\t"
                   << static_cast<double>(loss) << "\n";
    }
    return result;
}

// --- evaluation --------------------------------------------------------------------

template <typename S>
std::vector<std::uint8_t> predict_mask(model::ParsingModel<S>& m, const synth::Sample& sample,
                                       const std::string& dataset_id) {
    std::vector<S> pixels;
    pixels.reserve(sample.image.size());
    for (float v : sample.image) pixels.push_back(static_cast<S>(v));
    seg::FeatureMap<S> image = seg::make_feature_map(
        num::Tensor<S>::from({static_cast<std::int64_t>(sample.height) * sample.width, 3},
                             std::move(pixels)),
        1, sample.height, sample.width);
    seg::FeatureMap<S> logits = m.forward(image, dataset_id);
    const std::int64_t k = logits.values.dim(1);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(logits.values.dim(0)));
    for (std::int64_t p = 0; p < logits.values.dim(0); ++p) {
        const S* row = logits.values.data() + p * k;
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (row[c] > row[best]) best = c;
        mask[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
    }
    return mask;
}

template <typename S>
metrics::MetricsReport evaluate(model::ParsingModel<S>& m, const std::vector<LoadedSample>& samples,
                                const std::string& dataset_id,
                                const metrics::MetricsOptions& options = {}) {
    if (samples.empty()) throw UsageError("evaluate: no samples");
    metrics::ConfusionMatrix cm(m.taxonomy().label_count(dataset_id));
    for (const auto& s : samples) {
        const auto pred = predict_mask(m, s.sample, dataset_id);
        cm.accumulate(pred, s.sample.masks.at(dataset_id));
    }
    return metrics::compute(cm, options);
}

} // namespace graphonomy::train
