#pragma once

#include <cstdint>
#include <string>

namespace mol {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitVerification = 4;

struct RunOptions {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    bool has_seed = false;
    std::uint64_t seed = 0;
};

int run_train(const RunOptions& opt);
int run_reconstruct(const RunOptions& opt);
int run_verify(const RunOptions& opt);
int run_bench(const RunOptions& opt);

}  // namespace mol
