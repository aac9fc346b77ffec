#include "mol/image.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "binio.hpp"

namespace mol {

namespace image_stats {
namespace {
std::atomic<std::int64_t> g_live{0};
std::atomic<std::int64_t> g_peak{0};
}  // namespace

std::int64_t live() { return g_live.load(std::memory_order_relaxed); }
std::int64_t peak() { return g_peak.load(std::memory_order_relaxed); }
void reset_peak() { g_peak.store(g_live.load(std::memory_order_relaxed), std::memory_order_relaxed); }

namespace detail {
void on_alloc() {
    const std::int64_t now = g_live.fetch_add(1, std::memory_order_relaxed) + 1;
    std::int64_t prev = g_peak.load(std::memory_order_relaxed);
    while (prev < now && !g_peak.compare_exchange_weak(prev, now, std::memory_order_relaxed)) {
    }
}
void on_free() { g_live.fetch_sub(1, std::memory_order_relaxed); }
}  // namespace detail
}  // namespace image_stats

using binio::get_f64;
using binio::get_u32;
using binio::make_frame;
using binio::put_f64;
using binio::put_u32;
using binio::read_frame;

void write_image(const std::string& path, const ComplexImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const auto frame = make_frame("MOLIMG v1");
    out.write(frame.data(), frame.size());
    put_u32(out, static_cast<std::uint32_t>(img.height()));
    put_u32(out, static_cast<std::uint32_t>(img.width()));
    for (const cdouble& v : img.data()) {
        put_f64(out, v.real());
        put_f64(out, v.imag());
    }
    if (!out) throw IoError("short write to " + path);
}

ComplexImage read_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const auto frame = read_frame(in, path);
    if (std::strncmp(frame.data(), "MOLIMG v1", 9) != 0)
        throw IoError(path + ": not a MOLIMG v1 file");
    const std::uint32_t h = get_u32(in);
    const std::uint32_t w = get_u32(in);
    if (!in || h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
        throw IoError(path + ": bad image dimensions");
    ComplexImage img(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double re = get_f64(in);
        const double im = get_f64(in);
        img[i] = cdouble(re, im);
    }
    if (!in) throw IoError(path + ": truncated pixel data");
    return img;
}

void write_mask(const std::string& path, const MaskSpec& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const auto frame = make_frame("MOLMSK v1");
    out.write(frame.data(), frame.size());
    put_u32(out, static_cast<std::uint32_t>(mask.height));
    put_u32(out, static_cast<std::uint32_t>(mask.width));
    for (std::uint8_t v : mask.pattern) {
        const char c = v ? 1 : 0;
        out.write(&c, 1);
    }
    if (!out) throw IoError("short write to " + path);
}

MaskSpec read_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const auto frame = read_frame(in, path);
    if (std::strncmp(frame.data(), "MOLMSK v1", 9) != 0)
        throw IoError(path + ": not a MOLMSK v1 file");
    const std::uint32_t h = get_u32(in);
    const std::uint32_t w = get_u32(in);
    if (!in || h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
        throw IoError(path + ": bad mask dimensions");
    MaskSpec mask;
    mask.height = static_cast<int>(h);
    mask.width = static_cast<int>(w);
    mask.pattern.resize(static_cast<std::size_t>(h) * w);
    in.read(reinterpret_cast<char*>(mask.pattern.data()),
            static_cast<std::streamsize>(mask.pattern.size()));
    if (!in) throw IoError(path + ": truncated mask data");
    const int sampled = mask.count_sampled();
    mask.acceleration = sampled > 0 ? static_cast<double>(mask.pattern.size()) / sampled : 1.0;
    return mask;
}

}  // namespace mol
