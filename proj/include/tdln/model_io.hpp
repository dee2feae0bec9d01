// Model container: line-oriented UTF-8 text.
//
//   tdln-model v1
//   mode <full|dl_only|ml_only>
//   window <width> <stride>
//   channels <d>
//   classes <K>
//   norm-epsilon <e> / norm-mean <d vals> / norm-std <d vals>
//   valfdr <K> <v0..>           per-class validation detection rate, u = undefined
//   deep <0|1>
//     arch <w> <d> <blstm> <lstm> <fc1> <fc2> <K> <dropout> <forget-bias>
//     param <name> <rows> <cols> followed by one line per row
//   forest <0|1>
//     forest-meta <trees> <max-depth> <subset> <features> <K> <seed> <bootstrap>
//     subset <tree> <k> <f..>
//     tree <tree> <node-count>, then node <feature> <threshold> <left> <right> <k> <hist..>
//   end
//   checksum <16 hex digits>    FNV-1a 64 of every byte above
//
// Doubles are written with shortest round-trip precision, so save -> load is
// bit-exact. Version mismatch, malformed content and checksum failure raise
// distinct exception types.
#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tdln/pipeline.hpp"

namespace tdln {

constexpr int kModelFormatVersion = 1;

struct ModelIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionMismatchError : ModelIoError {
    using ModelIoError::ModelIoError;
};
struct MalformedModelError : ModelIoError {
    using ModelIoError::ModelIoError;
};
struct ChecksumError : ModelIoError {
    using ModelIoError::ModelIoError;
};

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char byte : data) {
        hash ^= byte;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

namespace detail {

inline void append_number(std::string& out, double v) { append_double(out, v); }

inline void append_number(std::string& out, std::uint64_t v) {
    out += std::to_string(v);
}

inline void emit_params(std::string& out, DeepNetParams& deep) {
    for (const ParamRef& ref : collect_params(deep)) {
        const std::size_t rows = ref.rows == 0 ? 1 : ref.rows;
        const std::size_t cols = ref.values->size() / rows;
        out += "param " + ref.name + " " + std::to_string(ref.rows) + " " +
               std::to_string(ref.cols) + "\n";
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                if (c) out += ' ';
                append_double(out, (*ref.values)[r * cols + c]);
            }
            out += '\n';
        }
    }
}

inline void emit_forest(std::string& out, const ForestModel& forest) {
    out += "forest-meta " + std::to_string(forest.n_estimators) + " " +
           std::to_string(forest.max_depth) + " " + std::to_string(forest.subset_size) + " " +
           std::to_string(forest.feature_count) + " " + std::to_string(forest.class_count) + " " +
           std::to_string(forest.seed) + " " + std::to_string(forest.bootstrap ? 1 : 0) + "\n";
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const auto& subset = forest.feature_subsets[t];
        out += "subset " + std::to_string(t) + " " + std::to_string(subset.size());
        for (std::size_t f : subset) out += " " + std::to_string(f);
        out += "\n";
        const Tree& tree = forest.trees[t];
        out += "tree " + std::to_string(t) + " " + std::to_string(tree.nodes.size()) + "\n";
        for (const TreeNode& node : tree.nodes) {
            out += "node " + std::to_string(node.feature) + " ";
            append_double(out, node.threshold);
            out += " " + std::to_string(node.left) + " " + std::to_string(node.right) + " " +
                   std::to_string(node.histogram.size());
            for (std::uint64_t h : node.histogram) out += " " + std::to_string(h);
            out += "\n";
        }
    }
}

// Sequential line/token scanner; every failure carries the 1-based line.
struct ModelReader {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    std::string source;

    [[noreturn]] void fail(const std::string& what) const {
        throw MalformedModelError(source + ":" + std::to_string(line_no) + ": " + what);
    }

    bool next_line(std::string_view& line) {
        if (pos >= text.size()) return false;
        const std::size_t nl = text.find('\n', pos);
        line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        return true;
    }

    std::vector<std::string_view> expect_line(const std::string& keyword) {
        std::string_view line;
        if (!next_line(line)) fail("unexpected end of file, expected '" + keyword + "'");
        std::vector<std::string_view> tokens = tokenize(line);
        if (tokens.empty() || tokens[0] != keyword)
            fail("expected '" + keyword + "' line, got '" + std::string(line) + "'");
        return tokens;
    }

    static std::vector<std::string_view> tokenize(std::string_view line) {
        std::vector<std::string_view> out;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && line[i] == ' ') ++i;
            const std::size_t start = i;
            while (i < line.size() && line[i] != ' ') ++i;
            if (i > start) out.push_back(line.substr(start, i - start));
        }
        return out;
    }

    double to_double(std::string_view tok) const {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size())
            fail("bad number '" + std::string(tok) + "'");
        return v;
    }

    long long to_int(std::string_view tok) const {
        long long v = 0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size())
            fail("bad integer '" + std::string(tok) + "'");
        return v;
    }

    std::uint64_t to_u64(std::string_view tok) const {
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || p != tok.data() + tok.size())
            fail("bad unsigned integer '" + std::string(tok) + "'");
        return v;
    }
};

}  // namespace detail

inline std::string serialize_model(const TdlnModel& model) {
    model.check_complete();
    std::string out;
    out += "tdln-model v" + std::to_string(kModelFormatVersion) + "\n";
    out += std::string("mode ") + mode_name(model.mode) + "\n";
    out += "window " + std::to_string(model.window.width) + " " +
           std::to_string(model.window.stride) + "\n";
    out += "channels " + std::to_string(model.channels) + "\n";
    out += "classes " + std::to_string(model.class_count) + "\n";
    out += "norm-epsilon ";
    detail::append_double(out, model.norm.epsilon);
    out += "\nnorm-mean";
    for (double m : model.norm.mean) {
        out += ' ';
        detail::append_double(out, m);
    }
    out += "\nnorm-std";
    for (double s : model.norm.stddev) {
        out += ' ';
        detail::append_double(out, s);
    }
    out += "\nvalfdr " + std::to_string(model.validation_detection_rate.size());
    for (const auto& v : model.validation_detection_rate) {
        out += ' ';
        if (v)
            detail::append_double(out, *v);
        else
            out += 'u';
    }
    out += "\n";

    out += std::string("deep ") + (model.deep ? "1" : "0") + "\n";
    if (model.deep) {
        const NetArchitecture& a = model.deep->arch;
        out += "arch " + std::to_string(a.window_width) + " " + std::to_string(a.channels) + " " +
               std::to_string(a.blstm_hidden) + " " + std::to_string(a.lstm_hidden) + " " +
               std::to_string(a.fc1_units) + " " + std::to_string(a.fc2_units) + " " +
               std::to_string(a.class_count) + " ";
        detail::append_double(out, a.dropout_rate);
        out += ' ';
        detail::append_double(out, a.forget_bias_init);
        out += "\n";
        DeepNetParams copy = *model.deep;  // collect_params needs mutable refs
        detail::emit_params(out, copy);
    }
    out += std::string("forest ") + (model.forest ? "1" : "0") + "\n";
    if (model.forest) detail::emit_forest(out, *model.forest);
    out += "end\n";

    char checksum[32];
    std::snprintf(checksum, sizeof(checksum), "checksum %016llx\n",
                  static_cast<unsigned long long>(fnv1a64(out)));
    out += checksum;
    return out;
}

inline void save_model(const TdlnModel& model, const std::string& path) {
    const std::string payload = serialize_model(model);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ModelIoError("cannot open '" + path + "' for writing");
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw ModelIoError("write to '" + path + "' failed");
}

inline TdlnModel parse_model(std::string_view text, const std::string& source) {
    // Checksum envelope first: find the final non-empty line.
    std::size_t end = text.size();
    while (end > 0 && (text[end - 1] == '\n' || text[end - 1] == '\r')) --end;
    const std::size_t last_nl = text.rfind('\n', end == 0 ? 0 : end - 1);
    const std::size_t tail_start = last_nl == std::string_view::npos ? 0 : last_nl + 1;
    const std::string_view tail = text.substr(tail_start, end - tail_start);
    if (tail.substr(0, 9) != "checksum ")
        throw MalformedModelError(source + ": missing checksum line (truncated file?)");
    const std::string_view hex = tail.substr(9);
    std::uint64_t stored = 0;
    const auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), stored, 16);
    if (ec != std::errc() || p != hex.data() + hex.size())
        throw MalformedModelError(source + ": unreadable checksum");
    const std::uint64_t actual = fnv1a64(text.substr(0, tail_start));
    if (actual != stored) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "stored %016llx, computed %016llx",
                      static_cast<unsigned long long>(stored),
                      static_cast<unsigned long long>(actual));
        throw ChecksumError(source + ": checksum mismatch (" + buf + ")");
    }

    detail::ModelReader reader{text.substr(0, tail_start), 0, 0, source};
    std::string_view header;
    if (!reader.next_line(header)) reader.fail("empty file");
    if (header.substr(0, 12) != "tdln-model v")
        reader.fail("not a tdln model file (bad header '" + std::string(header) + "')");
    const long long version = reader.to_int(header.substr(12));
    if (version != kModelFormatVersion)
        throw VersionMismatchError(source + ": format version " + std::to_string(version) +
                                   ", this build reads version " +
                                   std::to_string(kModelFormatVersion));

    TdlnModel model;
    auto mode_tokens = reader.expect_line("mode");
    if (mode_tokens.size() != 2) reader.fail("mode line needs one value");
    model.mode = parse_mode(std::string(mode_tokens[1]));

    auto window_tokens = reader.expect_line("window");
    if (window_tokens.size() != 3) reader.fail("window line needs two values");
    model.window.width = reader.to_u64(window_tokens[1]);
    model.window.stride = reader.to_u64(window_tokens[2]);

    auto channel_tokens = reader.expect_line("channels");
    if (channel_tokens.size() != 2) reader.fail("channels line needs one value");
    model.channels = reader.to_u64(channel_tokens[1]);

    auto class_tokens = reader.expect_line("classes");
    if (class_tokens.size() != 2) reader.fail("classes line needs one value");
    model.class_count = static_cast<int>(reader.to_int(class_tokens[1]));
    if (model.class_count < 1) reader.fail("class count must be >= 1");

    auto eps_tokens = reader.expect_line("norm-epsilon");
    if (eps_tokens.size() != 2) reader.fail("norm-epsilon line needs one value");
    model.norm.epsilon = reader.to_double(eps_tokens[1]);

    auto mean_tokens = reader.expect_line("norm-mean");
    if (mean_tokens.size() != model.channels + 1) reader.fail("norm-mean length mismatch");
    for (std::size_t c = 0; c < model.channels; ++c)
        model.norm.mean.push_back(reader.to_double(mean_tokens[c + 1]));

    auto std_tokens = reader.expect_line("norm-std");
    if (std_tokens.size() != model.channels + 1) reader.fail("norm-std length mismatch");
    for (std::size_t c = 0; c < model.channels; ++c)
        model.norm.stddev.push_back(reader.to_double(std_tokens[c + 1]));

    auto fdr_tokens = reader.expect_line("valfdr");
    if (fdr_tokens.size() < 2) reader.fail("valfdr line needs a count");
    const std::uint64_t fdr_count = reader.to_u64(fdr_tokens[1]);
    if (fdr_tokens.size() != fdr_count + 2) reader.fail("valfdr length mismatch");
    for (std::size_t i = 0; i < fdr_count; ++i) {
        const std::string_view tok = fdr_tokens[i + 2];
        if (tok == "u")
            model.validation_detection_rate.emplace_back();
        else
            model.validation_detection_rate.emplace_back(reader.to_double(tok));
    }

    auto deep_tokens = reader.expect_line("deep");
    if (deep_tokens.size() != 2) reader.fail("deep line needs one value");
    if (reader.to_int(deep_tokens[1]) == 1) {
        auto arch_tokens = reader.expect_line("arch");
        if (arch_tokens.size() != 10) reader.fail("arch line needs nine values");
        NetArchitecture arch;
        arch.window_width = reader.to_u64(arch_tokens[1]);
        arch.channels = reader.to_u64(arch_tokens[2]);
        arch.blstm_hidden = reader.to_u64(arch_tokens[3]);
        arch.lstm_hidden = reader.to_u64(arch_tokens[4]);
        arch.fc1_units = reader.to_u64(arch_tokens[5]);
        arch.fc2_units = reader.to_u64(arch_tokens[6]);
        arch.class_count = static_cast<int>(reader.to_int(arch_tokens[7]));
        arch.dropout_rate = reader.to_double(arch_tokens[8]);
        arch.forget_bias_init = reader.to_double(arch_tokens[9]);

        SeededRng scratch(0);
        DeepNetParams deep = init_deep_net(arch, scratch);
        for (const ParamRef& ref : collect_params(deep)) {
            auto param_tokens = reader.expect_line("param");
            if (param_tokens.size() != 4) reader.fail("param line needs three values");
            if (param_tokens[1] != ref.name)
                reader.fail("expected parameter '" + ref.name + "', file has '" +
                            std::string(param_tokens[1]) + "'");
            if (reader.to_u64(param_tokens[2]) != ref.rows ||
                reader.to_u64(param_tokens[3]) != ref.cols)
                reader.fail("parameter '" + ref.name + "' shape mismatch");
            const std::size_t rows = ref.rows == 0 ? 1 : ref.rows;
            const std::size_t cols = ref.values->size() / rows;
            for (std::size_t r = 0; r < rows; ++r) {
                std::string_view line;
                if (!reader.next_line(line)) reader.fail("unexpected end of parameter data");
                const auto values = detail::ModelReader::tokenize(line);
                if (values.size() != cols)
                    reader.fail("parameter '" + ref.name + "' row " + std::to_string(r) +
                                " has " + std::to_string(values.size()) + " values, expected " +
                                std::to_string(cols));
                for (std::size_t c = 0; c < cols; ++c)
                    (*ref.values)[r * cols + c] = reader.to_double(values[c]);
            }
        }
        model.deep = std::move(deep);
    }

    auto forest_tokens = reader.expect_line("forest");
    if (forest_tokens.size() != 2) reader.fail("forest line needs one value");
    if (reader.to_int(forest_tokens[1]) == 1) {
        auto meta = reader.expect_line("forest-meta");
        if (meta.size() != 8) reader.fail("forest-meta line needs seven values");
        ForestModel forest;
        forest.n_estimators = reader.to_u64(meta[1]);
        forest.max_depth = reader.to_u64(meta[2]);
        forest.subset_size = reader.to_u64(meta[3]);
        forest.feature_count = reader.to_u64(meta[4]);
        forest.class_count = static_cast<int>(reader.to_int(meta[5]));
        forest.seed = reader.to_u64(meta[6]);
        forest.bootstrap = reader.to_int(meta[7]) == 1;
        forest.trees.resize(forest.n_estimators);
        forest.feature_subsets.resize(forest.n_estimators);
        for (std::size_t t = 0; t < forest.n_estimators; ++t) {
            auto subset = reader.expect_line("subset");
            if (subset.size() < 3 || reader.to_u64(subset[1]) != t)
                reader.fail("subset record out of order");
            const std::uint64_t k = reader.to_u64(subset[2]);
            if (subset.size() != k + 3) reader.fail("subset length mismatch");
            for (std::size_t i = 0; i < k; ++i)
                forest.feature_subsets[t].push_back(reader.to_u64(subset[i + 3]));

            auto tree_tokens = reader.expect_line("tree");
            if (tree_tokens.size() != 3 || reader.to_u64(tree_tokens[1]) != t)
                reader.fail("tree record out of order");
            const std::uint64_t node_count = reader.to_u64(tree_tokens[2]);
            if (node_count == 0) reader.fail("tree with no nodes");
            for (std::uint64_t n = 0; n < node_count; ++n) {
                auto node_tokens = reader.expect_line("node");
                if (node_tokens.size() < 6) reader.fail("node line too short");
                TreeNode node;
                node.feature = static_cast<std::int32_t>(reader.to_int(node_tokens[1]));
                node.threshold = reader.to_double(node_tokens[2]);
                node.left = static_cast<std::int32_t>(reader.to_int(node_tokens[3]));
                node.right = static_cast<std::int32_t>(reader.to_int(node_tokens[4]));
                const std::uint64_t hist = reader.to_u64(node_tokens[5]);
                if (node_tokens.size() != hist + 6) reader.fail("node histogram length mismatch");
                for (std::uint64_t h = 0; h < hist; ++h)
                    node.histogram.push_back(reader.to_u64(node_tokens[h + 6]));
                if (node.feature >= 0 &&
                    (node.left < 0 || node.right < 0 ||
                     static_cast<std::uint64_t>(node.left) >= node_count ||
                     static_cast<std::uint64_t>(node.right) >= node_count))
                    reader.fail("split node with invalid children");
                if (node.feature < 0 && node.histogram.empty())
                    reader.fail("leaf node without histogram");
                forest.trees[t].nodes.push_back(std::move(node));
            }
        }
        model.forest = std::move(forest);
    }
    reader.expect_line("end");
    std::string_view rest;
    if (reader.next_line(rest) && !rest.empty())
        reader.fail("trailing content after 'end'");

    try {
        model.check_complete();
    } catch (const std::logic_error& e) {
        throw MalformedModelError(source + ": " + e.what());
    }
    return model;
}

inline TdlnModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ModelIoError("cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << is.rdbuf();
    return parse_model(buffer.str(), path);
}

}  // namespace tdln
