#include "graphonomy/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "graphonomy/errors.hpp"
#include "graphonomy/rng.hpp"

namespace graphonomy::synth {

namespace {

// ---- integer rasterization -----------------------------------------------------

struct Raster {
    int res;
    std::vector<std::uint8_t>* mask;  // fine labels
    std::vector<std::uint8_t>* owner; // figure index + 1 per painted pixel

    void plot(int x, int y, std::uint8_t label, std::uint8_t fig) {
        if (x < 0 || y < 0 || x >= res || y >= res) return;
        (*mask)[static_cast<std::size_t>(y * res + x)] = label;
        (*owner)[static_cast<std::size_t>(y * res + x)] = fig;
    }

    // Thick segment (capsule). All arithmetic in 64-bit integers.
    void capsule(int x0, int y0, int x1, int y1, int r, std::uint8_t label, std::uint8_t fig) {
        const std::int64_t dx = x1 - x0, dy = y1 - y0;
        const std::int64_t len2 = dx * dx + dy * dy;
        const int lo_x = std::min(x0, x1) - r, hi_x = std::max(x0, x1) + r;
        const int lo_y = std::min(y0, y1) - r, hi_y = std::max(y0, y1) + r;
        for (int y = lo_y; y <= hi_y; ++y) {
            for (int x = lo_x; x <= hi_x; ++x) {
                const std::int64_t vx = x - x0, vy = y - y0;
                std::int64_t dist2_scaled, scale = 1;
                if (len2 == 0) {
                    dist2_scaled = vx * vx + vy * vy;
                } else {
                    std::int64_t t = vx * dx + vy * dy;
                    t = std::clamp<std::int64_t>(t, 0, len2);
                    // |v|^2 - t^2/len2, scaled by len2 to stay integral
                    dist2_scaled = (vx * vx + vy * vy) * len2 - t * t;
                    scale = len2;
                }
                if (dist2_scaled <= static_cast<std::int64_t>(r) * r * scale) plot(x, y, label, fig);
            }
        }
    }

    void disc(int cx, int cy, int r, std::uint8_t label, std::uint8_t fig) {
        capsule(cx, cy, cx, cy, r, label, fig);
    }

    // Axis-aligned ellipse, optionally clipped to rows [row_lo, row_hi].
    void ellipse(int cx, int cy, int rx, int ry, std::uint8_t label, std::uint8_t fig,
                 int row_lo = -1 << 20, int row_hi = 1 << 20) {
        const std::int64_t rx2 = static_cast<std::int64_t>(rx) * rx;
        const std::int64_t ry2 = static_cast<std::int64_t>(ry) * ry;
        for (int y = std::max(cy - ry, row_lo); y <= std::min(cy + ry, row_hi); ++y) {
            for (int x = cx - rx; x <= cx + rx; ++x) {
                const std::int64_t ex = x - cx, ey = y - cy;
                if (ex * ex * ry2 + ey * ey * rx2 <= rx2 * ry2) plot(x, y, label, fig);
            }
        }
    }
};

struct Rgb {
    float r, g, b;
};

Rgb jitter(Rgb base, rng::Stream& s, double amount) {
    auto j = [&](float v) {
        return std::clamp(v + static_cast<float>(s.uniform(-amount, amount)), 0.0f, 1.0f);
    };
    return {j(base.r), j(base.g), j(base.b)};
}

// Per-figure color palette; semantically related parts share tones so the
// feature-similarity transfer scheme has visual signal to latch onto.
struct FigureColors {
    Rgb skin, hair, top, bottom, shoes, socks, accent, leather, glasses, pad;
};

FigureColors draw_colors(rng::Stream& s) {
    FigureColors c;
    c.skin = jitter({0.85f, 0.70f, 0.55f}, s, 0.12);
    c.hair = jitter({0.30f, 0.20f, 0.12f}, s, 0.12);
    c.top = {static_cast<float>(s.uniform(0.2, 0.95)), static_cast<float>(s.uniform(0.2, 0.95)),
             static_cast<float>(s.uniform(0.2, 0.95))};
    c.bottom = {static_cast<float>(s.uniform(0.1, 0.6)), static_cast<float>(s.uniform(0.1, 0.6)),
                static_cast<float>(s.uniform(0.3, 0.9))};
    c.shoes = jitter({0.15f, 0.12f, 0.10f}, s, 0.08);
    c.socks = jitter({0.85f, 0.85f, 0.82f}, s, 0.10);
    c.accent = {static_cast<float>(s.uniform(0.5, 1.0)), static_cast<float>(s.uniform(0.2, 0.8)),
                static_cast<float>(s.uniform(0.2, 0.8))};
    c.leather = jitter({0.40f, 0.26f, 0.13f}, s, 0.08);
    c.glasses = jitter({0.08f, 0.08f, 0.10f}, s, 0.04);
    // Shoulder pads lean toward the top garment's tone.
    c.pad = jitter({0.5f * c.top.r + 0.2f, 0.5f * c.top.g + 0.2f, 0.5f * c.top.b + 0.2f}, s, 0.08);
    return c;
}

struct FineIds {
    std::uint8_t straw_hat, long_hair, face, sun_glasses, silk_scarf, winter_coat, cotton_shirt,
        evening_dress, leather_belt, hand_bag, shoulder_pad, long_sleeve, fore_arm, wool_glove,
        denim_jeans, plaid_skirt, knee_sock, left_shoe, right_shoe;
};

std::uint8_t fine_id(const tax::LabelTaxonomy& tax, const std::string& fine_ds, const char* name) {
    const int idx = tax.label_index(fine_ds, name);
    if (idx < 0)
        throw ConfigError("scene generator needs label '" + std::string(name) + "' in dataset '" +
                          fine_ds + "'");
    return static_cast<std::uint8_t>(idx);
}

} // namespace

Sample generate_scene(std::uint64_t seed, const SceneConfig& config,
                      const tax::LabelTaxonomy& taxonomy) {
    const int res = config.resolution;
    if (res < 32 || res % 4 != 0)
        throw ConfigError("scene resolution must be >= 32 and divisible by 4, got " +
                          std::to_string(res));
    if (config.figure_count < 1 || config.figure_count > 2)
        throw ConfigError("scene figure count must be 1 or 2, got " +
                          std::to_string(config.figure_count));
    if (taxonomy.datasets.empty()) throw ConfigError("scene generator: empty taxonomy");

    const std::string& fine_ds = taxonomy.datasets.back().id;
    const FineIds id{
        fine_id(taxonomy, fine_ds, "straw_hat"),   fine_id(taxonomy, fine_ds, "long_hair"),
        fine_id(taxonomy, fine_ds, "face"),        fine_id(taxonomy, fine_ds, "sun_glasses"),
        fine_id(taxonomy, fine_ds, "silk_scarf"),  fine_id(taxonomy, fine_ds, "winter_coat"),
        fine_id(taxonomy, fine_ds, "cotton_shirt"), fine_id(taxonomy, fine_ds, "evening_dress"),
        fine_id(taxonomy, fine_ds, "leather_belt"), fine_id(taxonomy, fine_ds, "hand_bag"),
        fine_id(taxonomy, fine_ds, "shoulder_pad"), fine_id(taxonomy, fine_ds, "long_sleeve"),
        fine_id(taxonomy, fine_ds, "fore_arm"),    fine_id(taxonomy, fine_ds, "wool_glove"),
        fine_id(taxonomy, fine_ds, "denim_jeans"), fine_id(taxonomy, fine_ds, "plaid_skirt"),
        fine_id(taxonomy, fine_ds, "knee_sock"),   fine_id(taxonomy, fine_ds, "left_shoe"),
        fine_id(taxonomy, fine_ds, "right_shoe")};

    Sample sample;
    sample.seed = seed;
    sample.height = sample.width = res;
    std::vector<std::uint8_t> fine_mask(static_cast<std::size_t>(res * res), 0);
    std::vector<std::uint8_t> owner(static_cast<std::size_t>(res * res), 0);
    Raster raster{res, &fine_mask, &owner};

    rng::Stream pose_rng(seed, "scene/pose");
    const int u = res / 16;
    const int figures =
        config.figure_count == 1 ? 1 : 1 + static_cast<int>(pose_rng.next_below(2));

    std::vector<FigureColors> colors;
    int first_cx = 0;
    for (int f = 0; f < figures; ++f) {
        rng::Stream frng(seed, "scene/figure", static_cast<std::uint64_t>(f));
        colors.push_back(draw_colors(frng));
        const std::uint8_t fig = static_cast<std::uint8_t>(f + 1);

        int cx;
        if (f == 0) {
            cx = res / 2 + frng.uniform_int(-2 * u, 2 * u);
            first_cx = cx;
        } else if (config.occlusion) {
            cx = first_cx + frng.uniform_int(-2 * u, 2 * u);
        } else {
            const int side = first_cx <= res / 2 ? 1 : -1;
            cx = first_cx + side * frng.uniform_int(5 * u, 6 * u);
        }
        cx = std::clamp(cx, 3 * u, res - 3 * u);

        // Head
        const int head_rx = u + frng.uniform_int(0, u / 2);
        const int head_ry = (3 * u) / 2 + frng.uniform_int(0, u / 2);
        const int head_top = u / 2 + frng.uniform_int(0, u);
        const int hc_x = cx + frng.uniform_int(-u / 2, u / 2);
        const int hc_y = head_top + head_ry;
        const int neck_y = hc_y + head_ry + u / 4;

        // Torso
        const int torso_w = (3 * u) / 2 + frng.uniform_int(0, u / 2);
        const int torso_len = (7 * u) / 2 + frng.uniform_int(0, u);
        const int pelvis_y = neck_y + torso_len;

        sample.meta.push_back({cx, head_top, neck_y, pelvis_y, u});

        const bool wear_hat = frng.bernoulli(0.65);
        const bool wear_glasses = frng.bernoulli(0.60);
        const bool wear_scarf = frng.bernoulli(0.55);
        const bool wear_belt = frng.bernoulli(0.75);
        const bool wear_bag = frng.bernoulli(0.50);
        const int top_kind = frng.uniform_int(0, 2);   // coat / shirt / dress
        const bool wear_skirt = frng.bernoulli(0.5);

        // Legs (drawn before the torso so garments overlap thigh tops).
        const std::uint8_t leg_label = wear_skirt ? id.plaid_skirt : id.denim_jeans;
        for (int side = 0; side < 2; ++side) {
            const int sgn = side == 0 ? -1 : 1;
            const int hip_x = cx + sgn * u;
            const int knee_x = hip_x + frng.uniform_int(-u / 2, u / 2) + sgn * frng.uniform_int(0, u / 2);
            const int knee_y = pelvis_y + 2 * u + frng.uniform_int(0, u);
            const int ankle_x = knee_x + frng.uniform_int(-u / 2, u / 2);
            const int ankle_y = std::min(knee_y + 2 * u + frng.uniform_int(0, u / 2), res - u / 2 - 1);
            const int foot_len = u + frng.uniform_int(0, u / 2);

            raster.capsule(hip_x, pelvis_y, knee_x, knee_y, (3 * u) / 4, leg_label, fig);
            raster.capsule(knee_x, knee_y, ankle_x, ankle_y, u / 2, id.knee_sock, fig);
            const std::uint8_t shoe = side == 0 ? id.left_shoe : id.right_shoe;
            raster.capsule(ankle_x, ankle_y, ankle_x + sgn * foot_len, ankle_y, u / 2, shoe, fig);
        }
        if (wear_skirt) // skirt body over both thighs
            raster.capsule(cx, pelvis_y, cx, pelvis_y + 2 * u, (3 * u) / 2, id.plaid_skirt, fig);

        // Torso garment
        const std::uint8_t top_label =
            top_kind == 0 ? id.winter_coat : (top_kind == 1 ? id.cotton_shirt : id.evening_dress);
        const int top_r = top_kind == 0 ? torso_w + u / 4 : torso_w;
        raster.capsule(cx, neck_y + u / 2, cx, pelvis_y, top_r, top_label, fig);
        if (wear_belt)
            raster.capsule(cx - torso_w, pelvis_y - u / 2, cx + torso_w, pelvis_y - u / 2, u / 2,
                           id.leather_belt, fig);
        if (wear_scarf)
            raster.capsule(cx - u, neck_y + u / 4, cx + u, neck_y + u / 4, u / 2 + 1, id.silk_scarf,
                           fig);

        // Arms
        for (int side = 0; side < 2; ++side) {
            const int sgn = side == 0 ? -1 : 1;
            const int sx = cx + sgn * (top_r + u / 4);
            const int sy = neck_y + u;
            const int ex = sx + sgn * frng.uniform_int(0, u);
            const int ey = sy + 2 * u + frng.uniform_int(0, u);
            const int wx = ex + frng.uniform_int(-u, u);
            const int wy = ey + 2 * u + frng.uniform_int(0, u / 2);
            raster.capsule(sx, sy, ex, ey, (3 * u) / 4, id.long_sleeve, fig);
            raster.disc(sx, sy, (3 * u) / 4 + 1, id.shoulder_pad, fig);
            raster.capsule(ex, ey, wx, wy, u / 2, id.fore_arm, fig);
            raster.disc(wx, wy, u / 2 + 1, id.wool_glove, fig);
        }

        // Bag at the hip
        if (wear_bag) {
            const int sgn = frng.bernoulli(0.5) ? 1 : -1;
            raster.ellipse(cx + sgn * (torso_w + u), pelvis_y - u, u, (5 * u) / 4, id.hand_bag, fig);
        }

        // Head stack: face, hair band, hat band, glasses stripe.
        raster.ellipse(hc_x, hc_y, head_rx, head_ry, id.face, fig);
        const int hat_line = hc_y - head_ry / 2;
        const int hair_line = hc_y - head_ry / 8;
        if (wear_hat) {
            raster.ellipse(hc_x, hc_y, head_rx, head_ry, id.long_hair, fig, hat_line + 1, hair_line);
            raster.ellipse(hc_x, hc_y, head_rx + u / 4, head_ry, id.straw_hat, fig, hc_y - head_ry,
                           hat_line);
        } else {
            raster.ellipse(hc_x, hc_y, head_rx, head_ry, id.long_hair, fig, hc_y - head_ry, hair_line);
        }
        if (wear_glasses)
            raster.ellipse(hc_x, hc_y, head_rx - 1, head_ry, id.sun_glasses, fig, hc_y + head_ry / 8,
                           hc_y + head_ry / 8 + std::max(1, u / 2));
    }

    // Derive the coarser masks by projecting the fine mask; consistency is a
    // construction guarantee.
    sample.masks[fine_ds] = fine_mask;
    for (std::size_t di = 0; di + 1 < taxonomy.datasets.size(); ++di) {
        const auto& ds = taxonomy.datasets[di];
        const auto mapping = tax::hierarchy_projection(taxonomy, fine_ds, ds.id);
        std::vector<std::uint8_t> m(fine_mask.size());
        for (std::size_t i = 0; i < fine_mask.size(); ++i)
            m[i] = static_cast<std::uint8_t>(mapping[fine_mask[i]]);
        sample.masks[ds.id] = std::move(m);
    }

    // Photometrics: smooth background texture, per-class figure colors, noise.
    rng::Stream tex_rng(seed, "scene/texture");
    const int grid = res / 8 + 2;
    std::vector<float> bg_grid(static_cast<std::size_t>(grid * grid * 3));
    for (auto& v : bg_grid) v = static_cast<float>(tex_rng.uniform(0.25, 0.75));

    auto bg_color = [&](int x, int y) {
        const float fx = static_cast<float>(x) / 8.0f;
        const float fy = static_cast<float>(y) / 8.0f;
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const float tx = fx - static_cast<float>(x0), ty = fy - static_cast<float>(y0);
        Rgb out{};
        float* chans = &out.r;
        for (int c = 0; c < 3; ++c) {
            auto g = [&](int gy, int gx) {
                return bg_grid[static_cast<std::size_t>((gy * grid + gx) * 3 + c)];
            };
            chans[c] = (1 - ty) * ((1 - tx) * g(y0, x0) + tx * g(y0, x0 + 1)) +
                       ty * ((1 - tx) * g(y0 + 1, x0) + tx * g(y0 + 1, x0 + 1));
        }
        return out;
    };

    sample.image.assign(static_cast<std::size_t>(res * res * 3), 0.0f);
    rng::Stream noise_rng(seed, "scene/noise");
    const float noise = static_cast<float>(config.noise_level);
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y * res + x);
            const std::uint8_t label = fine_mask[pix];
            Rgb c;
            if (label == 0) {
                c = bg_color(x, y);
            } else {
                const FigureColors& fc = colors[owner[pix] - 1];
                if (label == id.face || label == id.fore_arm) c = fc.skin;
                else if (label == id.long_hair) c = fc.hair;
                else if (label == id.straw_hat) c = {0.5f * fc.top.r + 0.45f, 0.5f * fc.top.g + 0.4f,
                                                     0.3f * fc.top.b + 0.2f};
                else if (label == id.sun_glasses) c = fc.glasses;
                else if (label == id.silk_scarf) c = fc.accent;
                else if (label == id.winter_coat || label == id.cotton_shirt ||
                         label == id.evening_dress) c = fc.top;
                else if (label == id.leather_belt || label == id.hand_bag) c = fc.leather;
                else if (label == id.shoulder_pad) c = fc.pad;
                else if (label == id.long_sleeve) c = {0.85f * fc.top.r, 0.85f * fc.top.g,
                                                       0.85f * fc.top.b};
                else if (label == id.wool_glove) c = fc.socks;
                else if (label == id.denim_jeans || label == id.plaid_skirt) c = fc.bottom;
                else if (label == id.knee_sock) c = fc.socks;
                else c = fc.shoes; // left_shoe / right_shoe
            }
            float* px = sample.image.data() + pix * 3;
            const float nr = noise * static_cast<float>(noise_rng.uniform(-1.0, 1.0));
            const float ng = noise * static_cast<float>(noise_rng.uniform(-1.0, 1.0));
            const float nb = noise * static_cast<float>(noise_rng.uniform(-1.0, 1.0));
            px[0] = std::clamp(c.r + nr, 0.0f, 1.0f);
            px[1] = std::clamp(c.g + ng, 0.0f, 1.0f);
            px[2] = std::clamp(c.b + nb, 0.0f, 1.0f);
        }
    }
    return sample;
}

// ---- PNM codecs -----------------------------------------------------------------

namespace {

void append_header(std::vector<std::uint8_t>& out, const char* magic, int height, int width) {
    std::ostringstream os;
    os << magic << "\n" << width << " " << height << "\n255\n";
    const std::string h = os.str();
    out.insert(out.end(), h.begin(), h.end());
}

struct PnmHeader {
    std::string magic;
    int width = 0, height = 0, maxval = 0;
    std::size_t payload_offset = 0;
};

PnmHeader parse_header(const std::vector<std::uint8_t>& bytes) {
    PnmHeader h;
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) {
        throw ParseError("pnm: " + msg + " at byte offset " + std::to_string(pos));
    };
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size()) fail("unexpected end of header");
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos]) ) tok += static_cast<char>(bytes[pos++]);
        return tok;
    };
    h.magic = next_token();
    if (h.magic != "P5" && h.magic != "P6") fail("bad magic '" + h.magic + "'");
    auto to_int = [&](const std::string& tok) {
        for (char c : tok)
            if (!std::isdigit(static_cast<unsigned char>(c))) fail("non-numeric header field '" + tok + "'");
        return std::stoi(tok);
    };
    h.width = to_int(next_token());
    h.height = to_int(next_token());
    h.maxval = to_int(next_token());
    if (h.width <= 0 || h.height <= 0) fail("non-positive dimensions");
    if (h.maxval != 255) fail("unsupported maxval " + std::to_string(h.maxval));
    if (pos >= bytes.size()) fail("missing payload separator");
    ++pos; // single whitespace byte after maxval
    h.payload_offset = pos;
    return h;
}

} // namespace

std::vector<std::uint8_t> encode_p6(const std::vector<float>& image, int height, int width) {
    if (static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3 != image.size())
        throw DimensionError("encode_p6: image size " + std::to_string(image.size()) +
                             " does not match " + std::to_string(height) + "x" + std::to_string(width));
    std::vector<std::uint8_t> out;
    out.reserve(image.size() + 32);
    append_header(out, "P6", height, width);
    for (float v : image) {
        const long q = std::lround(static_cast<double>(v) * 255.0);
        out.push_back(static_cast<std::uint8_t>(std::clamp(q, 0l, 255l)));
    }
    return out;
}

std::vector<std::uint8_t> encode_p5(const std::vector<std::uint8_t>& mask, int height, int width) {
    if (static_cast<std::size_t>(height) * static_cast<std::size_t>(width) != mask.size())
        throw DimensionError("encode_p5: mask size " + std::to_string(mask.size()) +
                             " does not match " + std::to_string(height) + "x" + std::to_string(width));
    std::vector<std::uint8_t> out;
    out.reserve(mask.size() + 32);
    append_header(out, "P5", height, width);
    out.insert(out.end(), mask.begin(), mask.end());
    return out;
}

DecodedImage decode_p6(const std::vector<std::uint8_t>& bytes) {
    const PnmHeader h = parse_header(bytes);
    if (h.magic != "P6")
        throw ParseError("pnm: expected P6, got " + h.magic + " at byte offset 0");
    const std::size_t need = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) * 3;
    if (bytes.size() - h.payload_offset < need)
        throw ParseError("pnm: truncated payload, need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - h.payload_offset) + " at byte offset " +
                         std::to_string(h.payload_offset));
    DecodedImage img;
    img.height = h.height;
    img.width = h.width;
    img.pixels.resize(need);
    for (std::size_t i = 0; i < need; ++i)
        img.pixels[i] = static_cast<float>(bytes[h.payload_offset + i]) / 255.0f;
    return img;
}

DecodedMask decode_p5(const std::vector<std::uint8_t>& bytes) {
    const PnmHeader h = parse_header(bytes);
    if (h.magic != "P5")
        throw ParseError("pnm: expected P5, got " + h.magic + " at byte offset 0");
    const std::size_t need = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
    if (bytes.size() - h.payload_offset < need)
        throw ParseError("pnm: truncated payload, need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - h.payload_offset) + " at byte offset " +
                         std::to_string(h.payload_offset));
    DecodedMask mask;
    mask.height = h.height;
    mask.width = h.width;
    mask.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset),
                       bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset + need));
    return mask;
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + path + "'");
}

// ---- manifests -------------------------------------------------------------------

DatasetManifest load_manifest(const std::string& path, const tax::LabelTaxonomy& taxonomy,
                              std::ostream* warnings) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path + "'");
    DatasetManifest manifest;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 3)
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected image<TAB>mask<TAB>dataset, got " +
                             std::to_string(fields.size()) + " fields");
        if (taxonomy.dataset_index(fields[2]) < 0)
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown dataset '" + fields[2] +
                            "'");
        if (!std::filesystem::exists(fields[0]))
            throw DataError(path + ":" + std::to_string(line_no) + ": missing image file '" +
                            fields[0] + "'");
        if (!std::filesystem::exists(fields[1]))
            throw DataError(path + ":" + std::to_string(line_no) + ": missing mask file '" +
                            fields[1] + "'");
        manifest.records.push_back({fields[0], fields[1], fields[2]});
    }
    if (manifest.records.empty() && warnings)
        (*warnings) << "# warning: manifest '" << path << "' is empty\n";
    return manifest;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest '" + path + "'");
    for (const auto& r : manifest.records)
        out << r.image_path << "\t" << r.mask_path << "\t" << r.dataset_id << "\n";
}

// ---- palette ---------------------------------------------------------------------

Palette load_palette(const std::string& path, const tax::LabelTaxonomy& taxonomy) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open palette '" + path + "'");
    Palette palette;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream is(line);
        std::string ds, label;
        int r, g, b;
        if (!(is >> ds)) continue;
        if (!(is >> label >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255)
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected 'dataset label r g b' with 0-255 components");
        if (taxonomy.dataset_index(ds) < 0)
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown dataset '" + ds + "'");
        if (taxonomy.label_index(ds, label) < 0)
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown label '" + label +
                            "' in dataset '" + ds + "'");
        palette.colors[ds + "/" + label] = {static_cast<std::uint8_t>(r),
                                            static_cast<std::uint8_t>(g),
                                            static_cast<std::uint8_t>(b)};
    }
    return palette;
}

std::vector<float> colorize_mask(const std::vector<std::uint8_t>& mask, const std::string& dataset,
                                 const tax::LabelTaxonomy& taxonomy, const Palette& palette) {
    const auto& ds = taxonomy.dataset(dataset);
    std::vector<std::array<std::uint8_t, 3>> lut;
    lut.reserve(ds.labels.size());
    for (const auto& label : ds.labels) {
        auto it = palette.colors.find(dataset + "/" + label);
        if (it == palette.colors.end())
            throw DataError("palette has no color for '" + dataset + "/" + label + "'");
        lut.push_back(it->second);
    }
    std::vector<float> image(mask.size() * 3);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] >= lut.size())
            throw DataError("mask value " + std::to_string(mask[i]) + " outside dataset '" +
                            dataset + "'");
        for (int c = 0; c < 3; ++c)
            image[i * 3 + static_cast<std::size_t>(c)] =
                static_cast<float>(lut[mask[i]][static_cast<std::size_t>(c)]) / 255.0f;
    }
    return image;
}

// ---- synthetic embeddings ----------------------------------------------------------

std::string render_embeddings(const tax::LabelTaxonomy& taxonomy, std::uint64_t seed, int dim) {
    if (dim < 8) throw ConfigError("embedding dimension must be >= 8, got " + std::to_string(dim));
    const auto& roots = taxonomy.datasets.front();
    if (static_cast<int>(roots.labels.size()) > dim)
        throw ConfigError("embedding dimension " + std::to_string(dim) + " below coarse label count " +
                          std::to_string(roots.labels.size()));

    auto normalize = [](std::vector<double>& v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (double& x : v) x /= n;
        return n;
    };

    // Orthonormal coarse roots: Gram-Schmidt over seeded Gaussian draws.
    std::vector<std::vector<double>> root_vecs;
    for (std::size_t i = 0; i < roots.labels.size(); ++i) {
        rng::Stream s(seed, "embed/root", i);
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (auto& x : v) x = s.normal();
        for (const auto& prev : root_vecs) {
            double dot = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) dot += v[k] * prev[k];
            for (std::size_t k = 0; k < v.size(); ++k) v[k] -= dot * prev[k];
        }
        normalize(v);
        root_vecs.push_back(std::move(v));
    }

    // Latent per (dataset, label): parent latent plus orthogonal noise at a
    // 0.3 norm ratio, walking coarse to fine.
    std::map<std::pair<std::string, int>, std::vector<double>> latent;
    for (std::size_t i = 0; i < roots.labels.size(); ++i)
        latent[{roots.id, static_cast<int>(i)}] = root_vecs[i];
    for (std::size_t di = 1; di < taxonomy.datasets.size(); ++di) {
        const auto& parent_ds = taxonomy.datasets[di - 1];
        const auto& ds = taxonomy.datasets[di];
        const auto parent_of = tax::hierarchy_projection(taxonomy, ds.id, parent_ds.id);
        for (std::size_t li = 0; li < ds.labels.size(); ++li) {
            const auto& pvec = latent.at({parent_ds.id, parent_of[li]});
            rng::Stream s(seed, "embed/noise/" + ds.id + "/" + ds.labels[li]);
            std::vector<double> noise(static_cast<std::size_t>(dim));
            for (auto& x : noise) x = s.normal();
            double dot = 0.0, pn2 = 0.0;
            for (std::size_t k = 0; k < noise.size(); ++k) {
                dot += noise[k] * pvec[k];
                pn2 += pvec[k] * pvec[k];
            }
            for (std::size_t k = 0; k < noise.size(); ++k) noise[k] -= dot / pn2 * pvec[k];
            normalize(noise);
            const double pnorm = std::sqrt(pn2);
            std::vector<double> v(pvec);
            for (std::size_t k = 0; k < v.size(); ++k) v[k] += 0.3 * pnorm * noise[k];
            latent[{ds.id, static_cast<int>(li)}] = std::move(v);
        }
    }

    // Token vector: mean of the latents of every label using the token.
    std::map<std::string, std::pair<std::vector<double>, int>> token_acc;
    for (const auto& ds : taxonomy.datasets) {
        for (std::size_t li = 0; li < ds.labels.size(); ++li) {
            const auto& lv = latent.at({ds.id, static_cast<int>(li)});
            for (const auto& tok : ds.tokens[li]) {
                auto& [acc, count] = token_acc[tok];
                if (acc.empty()) acc.assign(static_cast<std::size_t>(dim), 0.0);
                for (std::size_t k = 0; k < lv.size(); ++k) acc[k] += lv[k];
                ++count;
            }
        }
    }

    std::ostringstream out;
    out << token_acc.size() << " " << dim << "\n";
    out.precision(12);
    for (const auto& [tok, acc] : token_acc) {
        out << tok;
        for (std::size_t k = 0; k < acc.first.size(); ++k)
            out << " " << acc.first[k] / static_cast<double>(acc.second);
        out << "\n";
    }
    return out.str();
}

void emit_embeddings(const tax::LabelTaxonomy& taxonomy, std::uint64_t seed, int dim,
                     const std::string& path) {
    const std::string text = render_embeddings(taxonomy, seed, dim);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write embedding file '" + path + "'");
    out << text;
}

} // namespace graphonomy::synth
