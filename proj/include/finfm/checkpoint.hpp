#pragma once

// Parameter file: a text manifest followed by raw little-endian float64 data.
//
//   FINFM-PARAMS 1
//   config <key>=<value> ...
//   init_seed <n>
//   tensors <count>
//   tensor <name> f64 <rows> <cols>      (one line per tensor, layout order)
//   data <total values>
//   <binary payload>

#include "finfm/model.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace finfm {

inline constexpr int kParamFileVersion = 1;

inline void save_parameters(std::ostream& out, const ForecasterState& s) {
    static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");
    const ParameterLayout layout(s.config);
    if (layout.total() != s.params.size())
        throw Error(ErrorCode::ParameterFile, "parameter buffer does not match config");
    const auto& c = s.config;
    out << "FINFM-PARAMS " << kParamFileVersion << '\n';
    out << "config input_patch_len=" << c.input_patch_len << " output_patch_len=" << c.output_patch_len
        << " num_layers=" << c.num_layers << " hidden_dim=" << c.hidden_dim << " num_heads=" << c.num_heads
        << " ffn_dim=" << c.ffn_dim << " max_context=" << c.max_context << '\n';
    out << "init_seed " << s.init_seed << '\n';
    out << "tensors " << layout.tensors().size() << '\n';
    for (const auto& t : layout.tensors()) out << "tensor " << t.name << " f64 " << t.rows << ' ' << t.cols << '\n';
    out << "data " << layout.total() << '\n';
    out.write(reinterpret_cast<const char*>(s.params.data()),
              static_cast<std::streamsize>(s.params.size() * sizeof(double)));
}

inline void save_parameters(const std::filesystem::path& path, const ForecasterState& s) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    save_parameters(out, s);
}

inline ForecasterState load_parameters(std::istream& in) {
    auto fail = [](const std::string& m) { return Error(ErrorCode::ParameterFile, m); };
    std::string line, word;
    if (!std::getline(in, line)) throw fail("empty parameter file");
    {
        std::istringstream ss(line);
        int version = 0;
        ss >> word >> version;
        if (word != "FINFM-PARAMS") throw fail("bad magic");
        if (version != kParamFileVersion) throw fail("unsupported version " + std::to_string(version));
    }
    ForecasterState s;
    if (!std::getline(in, line) || !line.starts_with("config ")) throw fail("missing config line");
    {
        std::istringstream ss(line.substr(7));
        while (ss >> word) {
            const auto eq = word.find('=');
            if (eq == std::string::npos) throw fail("bad config entry " + word);
            const auto key = word.substr(0, eq);
            const int value = std::stoi(word.substr(eq + 1));
            auto& c = s.config;
            if (key == "input_patch_len") c.input_patch_len = value;
            else if (key == "output_patch_len") c.output_patch_len = value;
            else if (key == "num_layers") c.num_layers = value;
            else if (key == "hidden_dim") c.hidden_dim = value;
            else if (key == "num_heads") c.num_heads = value;
            else if (key == "ffn_dim") c.ffn_dim = value;
            else if (key == "max_context") c.max_context = value;
            else throw fail("unknown config key " + key);
        }
    }
    s.config.validate();
    if (!std::getline(in, line) || !line.starts_with("init_seed ")) throw fail("missing init_seed");
    s.init_seed = std::stoull(line.substr(10));

    const ParameterLayout layout(s.config);
    std::size_t count = 0;
    if (!std::getline(in, line) || !line.starts_with("tensors ")) throw fail("missing tensor count");
    count = std::stoull(line.substr(8));
    if (count != layout.tensors().size()) throw fail("tensor count mismatch");
    for (const auto& t : layout.tensors()) {
        if (!std::getline(in, line)) throw fail("truncated manifest");
        std::istringstream ss(line);
        std::string tag, name, dtype;
        std::size_t rows = 0, cols = 0;
        ss >> tag >> name >> dtype >> rows >> cols;
        if (tag != "tensor" || name != t.name || dtype != "f64" || rows != t.rows || cols != t.cols)
            throw fail("manifest entry '" + line + "' does not match expected " + t.name);
    }
    if (!std::getline(in, line) || !line.starts_with("data ")) throw fail("missing data line");
    if (std::stoull(line.substr(5)) != layout.total()) throw fail("data size mismatch");
    s.params.resize(layout.total());
    in.read(reinterpret_cast<char*>(s.params.data()), static_cast<std::streamsize>(s.params.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(s.params.size() * sizeof(double))) throw fail("truncated data");
    for (double v : s.params)
        if (!std::isfinite(v)) throw fail("non-finite parameter");
    return s;
}

inline ForecasterState load_parameters(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return load_parameters(in);
}

} // namespace finfm
