#include "kpshift/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <utility>
#include <vector>

#include "kpshift/errors.hpp"
#include "kpshift/tensor_io.hpp"

namespace fs = std::filesystem;

namespace kpshift {

namespace {

std::string file_for(const std::string& name) {
    std::string f = name;
    for (char& c : f)
        if (c == '.') c = '_';
    return f + ".kpst";
}

using Entries = std::vector<std::pair<std::string, const Tensor*>>;

void kpsem_entries(const KpsemParams& p, Entries& out) {
    for (std::size_t g = 0; g < p.nets.size(); ++g) {
        const std::string base = "set" + std::to_string(g);
        out.emplace_back(base + ".sep.w1", &p.nets[g].w1);
        out.emplace_back(base + ".sep.b1", &p.nets[g].b1);
        out.emplace_back(base + ".sep.w2", &p.nets[g].w2);
        out.emplace_back(base + ".sep.b2", &p.nets[g].b2);
        out.emplace_back(base + ".embed.weight", &p.embeddings[g].weight);
        out.emplace_back(base + ".embed.bias", &p.embeddings[g].bias);
    }
    out.emplace_back("head.conv1.weight", &p.conv1_w);
    out.emplace_back("head.conv1.bias", &p.conv1_b);
    out.emplace_back("head.conv2.weight", &p.conv2_w);
    out.emplace_back("head.conv2.bias", &p.conv2_b);
}

void model_entries(const Model& m, Entries& out) {
    if (m.use_kpsem) kpsem_entries(m.kpsem, out);
    out.emplace_back("backbone.stage1.weight", &m.backbone.stage1.weight);
    out.emplace_back("backbone.stage1.bias", &m.backbone.stage1.bias);
    out.emplace_back("backbone.stage2.weight", &m.backbone.stage2.weight);
    out.emplace_back("backbone.stage2.bias", &m.backbone.stage2.bias);
    out.emplace_back("classifier.weight", &m.classifier.weight);
    out.emplace_back("classifier.bias", &m.classifier.bias);
}

void write_checkpoint(const std::string& dir, const Entries& entries, const RunConfig& cfg) {
    try {
        fs::create_directories(dir);
    } catch (const fs::filesystem_error& e) {
        throw FormatError(std::string("cannot create checkpoint directory: ") + e.what(), 0);
    }
    std::string manifest;
    for (const auto& [name, tensor] : entries) {
        const std::string file = file_for(name);
        tensor_write(*tensor, (fs::path(dir) / file).string());
        manifest += name + "\t" + file + "\n";
    }
    std::ofstream mf((fs::path(dir) / "manifest.txt").string(), std::ios::binary);
    if (!mf) throw FormatError("cannot write manifest in " + dir, 0);
    mf << manifest;
    std::ofstream cf((fs::path(dir) / "config.txt").string(), std::ios::binary);
    if (!cf) throw FormatError("cannot write config echo in " + dir, 0);
    cf << echo_run_config(cfg);
}

std::map<std::string, Tensor> read_manifest(const std::string& dir) {
    const std::string path = (fs::path(dir) / "manifest.txt").string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open manifest " + path, 0);
    std::map<std::string, Tensor> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError("manifest line " + std::to_string(lineno) +
                                  " is not name<TAB>filename",
                              0);
        const std::string name = line.substr(0, tab);
        const std::string file = line.substr(tab + 1);
        out[name] = tensor_read((fs::path(dir) / file).string());
    }
    return out;
}

const Tensor& require(const std::map<std::string, Tensor>& m, const std::string& name,
                      const std::string& dir) {
    const auto it = m.find(name);
    if (it == m.end())
        throw FormatError("checkpoint " + dir + " is missing tensor '" + name + "'", 0);
    return it->second;
}

RunConfig read_config_echo(const std::string& dir) {
    return load_run_config((fs::path(dir) / "config.txt").string());
}

KpsemParams assemble_kpsem(const std::map<std::string, Tensor>& tensors, const RunConfig& cfg,
                           const std::string& dir) {
    KpsemParams p;
    p.nets.resize(cfg.G);
    p.embeddings.resize(cfg.G);
    for (std::size_t g = 0; g < cfg.G; ++g) {
        const std::string base = "set" + std::to_string(g);
        p.nets[g].k = k_from_regions(cfg.K);
        p.nets[g].w1 = require(tensors, base + ".sep.w1", dir);
        p.nets[g].b1 = require(tensors, base + ".sep.b1", dir);
        p.nets[g].w2 = require(tensors, base + ".sep.w2", dir);
        p.nets[g].b2 = require(tensors, base + ".sep.b2", dir);
        p.embeddings[g].weight = require(tensors, base + ".embed.weight", dir);
        p.embeddings[g].bias = require(tensors, base + ".embed.bias", dir);
    }
    p.conv1_w = require(tensors, "head.conv1.weight", dir);
    p.conv1_b = require(tensors, "head.conv1.bias", dir);
    p.conv2_w = require(tensors, "head.conv2.weight", dir);
    p.conv2_b = require(tensors, "head.conv2.bias", dir);
    return p;
}

}  // namespace

void save_kpsem_checkpoint(const std::string& dir, const KpsemParams& params,
                           const RunConfig& cfg) {
    Entries entries;
    kpsem_entries(params, entries);
    write_checkpoint(dir, entries, cfg);
}

KpsemParams load_kpsem_checkpoint(const std::string& dir, RunConfig* cfg_out) {
    const RunConfig cfg = read_config_echo(dir);
    const auto tensors = read_manifest(dir);
    if (cfg_out) *cfg_out = cfg;
    return assemble_kpsem(tensors, cfg, dir);
}

void save_model_checkpoint(const std::string& dir, const Model& m, const RunConfig& cfg) {
    Entries entries;
    model_entries(m, entries);
    write_checkpoint(dir, entries, cfg);
}

Model load_model_checkpoint(const std::string& dir, RunConfig* cfg_out) {
    const RunConfig cfg = read_config_echo(dir);
    const auto tensors = read_manifest(dir);
    Model m;
    m.use_kpsem = cfg.use_kpsem;
    m.kpsem_stage = cfg.position;
    m.kcfg = kpsem_config(cfg);
    if (m.use_kpsem) m.kpsem = assemble_kpsem(tensors, cfg, dir);
    m.backbone.stage1.weight = require(tensors, "backbone.stage1.weight", dir);
    m.backbone.stage1.bias = require(tensors, "backbone.stage1.bias", dir);
    m.backbone.stage2.weight = require(tensors, "backbone.stage2.weight", dir);
    m.backbone.stage2.bias = require(tensors, "backbone.stage2.bias", dir);
    m.classifier.weight = require(tensors, "classifier.weight", dir);
    m.classifier.bias = require(tensors, "classifier.bias", dir);
    if (cfg_out) *cfg_out = cfg;
    return m;
}

}  // namespace kpshift
