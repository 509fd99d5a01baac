#pragma once

// Persistence: 16-bit grayscale frame stacks (PNG or raw little-endian),
// stack manifests, scene files, and the CSV outputs. JSON parsing reports
// the full field path on every schema complaint so config mistakes are
// findable.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include <json.hpp>

#include "holovol/errors.hpp"
#include "holovol/simulate.hpp"

namespace holovol {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// JSON helpers

namespace jsondetail {

inline std::string joined(const std::string& ctx, const char* key) {
    return ctx.empty() ? std::string(key) : ctx + "." + key;
}

inline const json& need(const json& obj, const char* key,
                        const std::string& ctx) {
    require(obj.is_object(), ErrorCode::config_error,
            (ctx.empty() ? std::string("document") : ctx) +
                " must be a JSON object");
    auto it = obj.find(key);
    require(it != obj.end(), ErrorCode::config_error,
            "missing field " + joined(ctx, key));
    return *it;
}

inline double need_number(const json& obj, const char* key,
                          const std::string& ctx) {
    const json& f = need(obj, key, ctx);
    require(f.is_number(), ErrorCode::config_error,
            joined(ctx, key) + " must be a number");
    return f.get<double>();
}

inline double number_or(const json& obj, const char* key,
                        const std::string& ctx, double fallback) {
    if (!obj.is_object() || !obj.contains(key))
        return fallback;
    return need_number(obj, key, ctx);
}

inline std::int64_t need_int(const json& obj, const char* key,
                             const std::string& ctx) {
    const json& f = need(obj, key, ctx);
    require(f.is_number_integer(), ErrorCode::config_error,
            joined(ctx, key) + " must be an integer");
    return f.get<std::int64_t>();
}

inline std::int64_t int_or(const json& obj, const char* key,
                           const std::string& ctx, std::int64_t fallback) {
    if (!obj.is_object() || !obj.contains(key))
        return fallback;
    return need_int(obj, key, ctx);
}

inline std::uint64_t uint_or(const json& obj, const char* key,
                             const std::string& ctx, std::uint64_t fallback) {
    if (!obj.is_object() || !obj.contains(key))
        return fallback;
    const json& f = need(obj, key, ctx);
    require(f.is_number_unsigned() ||
                (f.is_number_integer() && f.get<std::int64_t>() >= 0),
            ErrorCode::config_error,
            joined(ctx, key) + " must be a non-negative integer");
    return f.get<std::uint64_t>();
}

inline std::string string_or(const json& obj, const char* key,
                             const std::string& ctx,
                             const std::string& fallback) {
    if (!obj.is_object() || !obj.contains(key))
        return fallback;
    const json& f = need(obj, key, ctx);
    require(f.is_string(), ErrorCode::config_error,
            joined(ctx, key) + " must be a string");
    return f.get<std::string>();
}

inline bool bool_or(const json& obj, const char* key, const std::string& ctx,
                    bool fallback) {
    if (!obj.is_object() || !obj.contains(key))
        return fallback;
    const json& f = need(obj, key, ctx);
    require(f.is_boolean(), ErrorCode::config_error,
            joined(ctx, key) + " must be a boolean");
    return f.get<bool>();
}

inline void check_schema_version(const json& obj, const std::string& ctx) {
    const auto v = need_int(obj, "schema_version", ctx);
    require(v == kSchemaVersion, ErrorCode::config_error,
            joined(ctx, "schema_version") + " must be " +
                std::to_string(kSchemaVersion));
}

} // namespace jsondetail

inline json parse_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error,
            "cannot open " + path.string());
    json j = json::parse(in, nullptr, false, true);
    require(!j.is_discarded(), ErrorCode::config_error,
            "malformed JSON in " + path.string());
    return j;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io_error,
            "cannot write " + path.string());
    out << text;
    out.flush();
    require(out.good(), ErrorCode::io_error,
            "write failed for " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error,
            "cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return text;
}

inline void write_json_file(const std::filesystem::path& path,
                            const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Frame files

// Pixels travel as 16-bit grayscale regardless of the sensor's quantization
// depth; the manifest records the true bit depth.

inline void write_png16(const std::filesystem::path& path,
                        const RealGrid& img) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    require(fp != nullptr, ErrorCode::io_error,
            "cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    std::vector<png_uint_16> row(img.cols());
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail(ErrorCode::io_error, "PNG write failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()),
                 static_cast<png_uint_32>(img.rows()), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);  // file is big-endian, memory is host order
    for (int r = 0; r < img.rows(); ++r) {
        for (int c = 0; c < img.cols(); ++c) {
            const double v = img(r, c);
            const long q = std::lround(std::isfinite(v) ? v : 0.0);
            row[c] = static_cast<png_uint_16>(std::clamp(q, 0L, 65535L));
        }
        png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline RealGrid read_png16(const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    require(fp != nullptr, ErrorCode::io_error,
            "cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    RealGrid img;
    std::vector<png_uint_16> row;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail(ErrorCode::io_error, "PNG read failed for " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const bool gray16 =
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
        png_get_bit_depth(png, info) == 16;
    if (!gray16) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        fail(ErrorCode::io_error,
             path.string() + " is not 16-bit grayscale");
    }
    png_set_swap(png);
    const auto rows = png_get_image_height(png, info);
    const auto cols = png_get_image_width(png, info);
    img = RealGrid(rows, cols);
    row.resize(cols);
    for (png_uint_32 r = 0; r < rows; ++r) {
        png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
        for (png_uint_32 c = 0; c < cols; ++c)
            img(r, c) = static_cast<double>(row[c]);
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

inline void write_raw16(const std::filesystem::path& path,
                        const RealGrid& img) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(img.size() * 2);
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = img[i];
        const long q = std::lround(std::isfinite(v) ? v : 0.0);
        const auto u = static_cast<std::uint16_t>(std::clamp(q, 0L, 65535L));
        bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
        bytes.push_back(static_cast<std::uint8_t>(u >> 8));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::io_error,
            "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(out.good(), ErrorCode::io_error,
            "write failed for " + path.string());
}

inline RealGrid read_raw16(const std::filesystem::path& path, size_t rows,
                           size_t cols) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error,
            "cannot open " + path.string());
    std::vector<std::uint8_t> bytes(rows * cols * 2);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    require(in.gcount() == static_cast<std::streamsize>(bytes.size()),
            ErrorCode::io_error, path.string() + " is truncated");
    RealGrid img(rows, cols);
    for (size_t i = 0; i < rows * cols; ++i)
        img[i] = static_cast<double>(
            static_cast<std::uint16_t>(bytes[2 * i]) |
            (static_cast<std::uint16_t>(bytes[2 * i + 1]) << 8));
    return img;
}

// ---------------------------------------------------------------------------
// Frame stacks

struct StackManifest {
    std::string format = "png";  // "png" or "raw"
    int width = 0;
    int height = 0;
    int count = 0;
    double frame_rate_hz = 2.0;
    SensorLayout layout = SensorLayout::mono;
    int bit_depth = 12;
};

inline std::string frame_filename(int index, const std::string& format) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06d.%s", index, format.c_str());
    return buf;
}

inline void write_manifest(const std::filesystem::path& dir,
                           const StackManifest& m) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["format"] = m.format;
    j["width"] = m.width;
    j["height"] = m.height;
    j["count"] = m.count;
    j["frame_rate_hz"] = m.frame_rate_hz;
    j["layout"] = layout_name(m.layout);
    j["bit_depth"] = m.bit_depth;
    write_json_file(dir / "manifest.json", j);
}

inline StackManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    require(std::filesystem::exists(path), ErrorCode::io_error,
            "no manifest.json in " + dir.string());
    const json j = parse_json_file(path);
    using namespace jsondetail;
    check_schema_version(j, "manifest");
    StackManifest m;
    m.format = string_or(j, "format", "manifest", "png");
    require(m.format == "png" || m.format == "raw", ErrorCode::config_error,
            "manifest.format must be \"png\" or \"raw\"");
    m.width = static_cast<int>(need_int(j, "width", "manifest"));
    m.height = static_cast<int>(need_int(j, "height", "manifest"));
    m.count = static_cast<int>(need_int(j, "count", "manifest"));
    m.frame_rate_hz = need_number(j, "frame_rate_hz", "manifest");
    m.layout = layout_from_name(string_or(j, "layout", "manifest", "mono"));
    m.bit_depth = static_cast<int>(int_or(j, "bit_depth", "manifest", 12));
    require(m.width > 0 && m.height > 0 && m.count >= 0 &&
                m.frame_rate_hz > 0,
            ErrorCode::config_error, "manifest has non-positive geometry");
    return m;
}

inline void write_frame_stack(const std::filesystem::path& dir,
                              const std::vector<RawFrame>& frames,
                              double frame_rate_hz,
                              const std::string& format = "png") {
    require(format == "png" || format == "raw", ErrorCode::config_error,
            "frame format must be \"png\" or \"raw\"");
    require(!frames.empty(), ErrorCode::invalid_input,
            "refusing to write an empty frame stack");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    StackManifest m;
    m.format = format;
    m.width = frames.front().pixels.cols();
    m.height = frames.front().pixels.rows();
    m.count = static_cast<int>(frames.size());
    m.frame_rate_hz = frame_rate_hz;
    m.layout = frames.front().layout;
    m.bit_depth = frames.front().bit_depth;
    for (size_t k = 0; k < frames.size(); ++k) {
        require(frames[k].pixels.rows() == m.height &&
                    frames[k].pixels.cols() == m.width,
                ErrorCode::invalid_input, "frame stack has mixed sizes");
        const auto path =
            dir / frame_filename(static_cast<int>(k), format);
        if (format == "png")
            write_png16(path, frames[k].pixels);
        else
            write_raw16(path, frames[k].pixels);
    }
    write_manifest(dir, m);
}

inline std::vector<RawFrame> read_frame_stack(
    const std::filesystem::path& dir) {
    const StackManifest m = read_manifest(dir);
    std::vector<RawFrame> frames;
    frames.reserve(m.count);
    for (int k = 0; k < m.count; ++k) {
        const auto path = dir / frame_filename(k, m.format);
        require(std::filesystem::exists(path), ErrorCode::io_error,
                "missing frame " + path.string());
        RawFrame f;
        f.pixels = m.format == "png" ? read_png16(path)
                                     : read_raw16(path, m.height, m.width);
        require(f.pixels.rows() == m.height && f.pixels.cols() == m.width,
                ErrorCode::io_error,
                path.string() + " does not match the manifest size");
        f.timestamp_s = static_cast<double>(k) / m.frame_rate_hz;
        f.layout = m.layout;
        f.bit_depth = m.bit_depth;
        frames.push_back(std::move(f));
    }
    return frames;
}

// ---------------------------------------------------------------------------
// Scene files

inline Scene parse_scene(const json& j) {
    using namespace jsondetail;
    check_schema_version(j, "scene");
    Scene scene;

    const json& fov = need(j, "fov_um", "scene");
    require(fov.is_array() && fov.size() == 2 && fov[0].is_number() &&
                fov[1].is_number(),
            ErrorCode::config_error,
            "scene.fov_um must be a [width, height] number pair");
    const double w = fov[0].get<double>(), h = fov[1].get<double>();
    require(w == h, ErrorCode::config_error,
            "scene.fov_um must be square (width == height)");
    scene.fov_um = w;

    scene.seed = uint_or(j, "seed", "scene", 0);

    const json& drops = need(j, "droplets", "scene");
    require(drops.is_array(), ErrorCode::config_error,
            "scene.droplets must be an array");
    for (size_t i = 0; i < drops.size(); ++i) {
        const std::string ctx = "scene.droplets[" + std::to_string(i) + "]";
        DropletSpec d;
        d.x_um = need_number(drops[i], "x_um", ctx);
        d.y_um = need_number(drops[i], "y_um", ctx);
        d.a_um = need_number(drops[i], "a_um", ctx);
        d.theta0_rad = need_number(drops[i], "theta0_rad", ctx);
        d.k_rad_per_s = need_number(drops[i], "K_rad_per_s", ctx);
        scene.droplets.push_back(d);
    }

    if (j.contains("sensor")) {
        const json& s = need(j, "sensor", "scene");
        scene.sensor.layout =
            layout_from_name(string_or(s, "layout", "scene.sensor", "bayer"));
        if (s.contains("channel_gains")) {
            const json& g = s["channel_gains"];
            require(g.is_array() && g.size() == 4, ErrorCode::config_error,
                    "scene.sensor.channel_gains must have four entries");
            for (size_t i = 0; i < 4; ++i) {
                require(g[i].is_number(), ErrorCode::config_error,
                        "scene.sensor.channel_gains must be numbers");
                scene.sensor.channel_gains[i] = g[i].get<double>();
            }
        }
        if (s.contains("shade_poly_coeffs")) {
            const json& p = s["shade_poly_coeffs"];
            require(p.is_array() && !p.empty(), ErrorCode::config_error,
                    "scene.sensor.shade_poly_coeffs must be a number array");
            scene.sensor.shade_poly_coeffs.clear();
            for (const auto& c : p) {
                require(c.is_number(), ErrorCode::config_error,
                        "scene.sensor.shade_poly_coeffs must be numbers");
                scene.sensor.shade_poly_coeffs.push_back(c.get<double>());
            }
        }
        scene.sensor.shot_noise_scale =
            number_or(s, "shot_noise_scale", "scene.sensor", 0.0);
        scene.sensor.bit_depth =
            static_cast<int>(int_or(s, "bit_depth", "scene.sensor", 12));
    }
    return scene;
}

inline json scene_to_json(const Scene& scene) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["fov_um"] = {scene.fov_um, scene.fov_um};
    j["seed"] = scene.seed;
    j["droplets"] = json::array();
    for (const auto& d : scene.droplets)
        j["droplets"].push_back({{"x_um", d.x_um},
                                 {"y_um", d.y_um},
                                 {"a_um", d.a_um},
                                 {"theta0_rad", d.theta0_rad},
                                 {"K_rad_per_s", d.k_rad_per_s}});
    json s;
    s["layout"] = layout_name(scene.sensor.layout);
    s["channel_gains"] = {scene.sensor.channel_gains[0],
                          scene.sensor.channel_gains[1],
                          scene.sensor.channel_gains[2],
                          scene.sensor.channel_gains[3]};
    s["shade_poly_coeffs"] = scene.sensor.shade_poly_coeffs;
    s["shot_noise_scale"] = scene.sensor.shot_noise_scale;
    s["bit_depth"] = scene.sensor.bit_depth;
    j["sensor"] = s;
    return j;
}

// ---------------------------------------------------------------------------
// CSV output

// %.12g keeps round-trippable precision without trailing digit churn, which
// the byte-for-byte determinism guarantee depends on.
inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_ground_truth_csv(const std::filesystem::path& path,
                                   const Scene& scene) {
    std::string text = "id,x_um,y_um,a_um,theta0_rad,K_rad_per_s\n";
    for (size_t i = 0; i < scene.droplets.size(); ++i) {
        const auto& d = scene.droplets[i];
        text += std::to_string(i) + "," + csv_num(d.x_um) + "," +
                csv_num(d.y_um) + "," + csv_num(d.a_um) + "," +
                csv_num(d.theta0_rad) + "," + csv_num(d.k_rad_per_s) + "\n";
    }
    write_text_file(path, text);
}

} // namespace holovol
