#include "mol/manifest.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "mol/errors.hpp"

namespace mol {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for checksum");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::string iso_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ManifestEntry manifest_entry_for(const std::string& out_dir, const std::string& rel_path) {
    const std::filesystem::path full = std::filesystem::path(out_dir) / rel_path;
    ManifestEntry e;
    e.path = rel_path;
    e.bytes = static_cast<std::uint64_t>(std::filesystem::file_size(full));
    e.checksum = to_hex(fnv1a64_file(full.string()));
    return e;
}

void write_manifest(const std::string& out_dir, const RunManifest& manifest) {
    nlohmann::json root;
    root["command"] = manifest.command;
    root["config"] = nlohmann::json::parse(manifest.config_json);
    root["started_at"] = manifest.started_at;
    root["finished_at"] = manifest.finished_at;
    root["version"] = manifest.version;
    nlohmann::json files = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.files)
        files.push_back({{"path", e.path}, {"bytes", e.bytes}, {"fnv1a64", e.checksum}});
    root["files"] = files;
    const std::filesystem::path p = std::filesystem::path(out_dir) / "manifest.json";
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << root.dump(2) << '\n';
}

}  // namespace mol
