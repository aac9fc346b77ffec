#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mol {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::string& path);
std::string to_hex(std::uint64_t v);

struct ManifestEntry {
    std::string path;  // relative to the output directory
    std::uint64_t bytes = 0;
    std::string checksum;  // fnv1a64, hex
};

struct RunManifest {
    std::string command;
    std::string config_json;  // resolved config, verbatim
    std::string started_at;
    std::string finished_at;
    std::string version;
    std::vector<ManifestEntry> files;
};

std::string iso_timestamp_now();

// stats the file under out_dir and records size + checksum
ManifestEntry manifest_entry_for(const std::string& out_dir, const std::string& rel_path);

// writes <out_dir>/manifest.json
void write_manifest(const std::string& out_dir, const RunManifest& manifest);

}  // namespace mol
