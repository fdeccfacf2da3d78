#pragma once

// Input files shared by the CLI tests and the acceptance binary.

#include "depbounds/dataset_io.hpp"
#include "depbounds/simulation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace fixtures {

inline const char* kSchema = "[columns]\nx1 = continuous\nx2 = binary\n";

// Fresh directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("depbounds_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

// Cox design with independent censoring; writes data.csv and schema.ini.
inline void write_design(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed, double lambda = 0.2)
{
    depbounds::SimDesign design;
    design.n = n;
    depbounds::CounterRng rng(depbounds::stream_key({seed, 1, 0}));
    depbounds::Dataset d = depbounds::generate_dataset(design, lambda, rng);
    std::ofstream csv(dir / "data.csv"), schema(dir / "schema.ini");
    depbounds::write_dataset(d, csv, schema);
}

// No censoring and an event probability by t = 1 that is high for |x1| > 1 and
// zero otherwise: no monotone single index fits, so every r is rejected.
inline void write_misspecified(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed)
{
    depbounds::CounterRng rng(seed);
    std::ofstream csv(dir / "data.csv");
    csv << "y,delta,x1,x2\n";
    for (std::size_t i = 0; i < n; ++i) {
        double x1 = -2.0 + 4.0 * rng.uniform();
        int x2 = rng.uniform() > 0.5 ? 1 : 0;
        double y = (std::abs(x1) > 1.0 ? 0.5 : 2.0) + 0.1 * rng.uniform();
        csv << depbounds::format_double(y) << ",1," << depbounds::format_double(x1) << ',' << x2 << '\n';
    }
    write_text(dir / "schema.ini", kSchema);
}

}  // namespace fixtures
