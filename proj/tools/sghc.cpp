#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sghc/analysis.hpp"
#include "sghc/features.hpp"
#include "sghc/parallel.hpp"
#include "sghc/quantizer.hpp"
#include "sghc/serialize.hpp"
#include "sghc/trainer.hpp"
#include "sghc/vocab.hpp"

namespace fs = std::filesystem;
using namespace sghc;

namespace {

constexpr std::string_view kTokenHeader = "sghc-tokens v1";

struct Inputs {
    std::string corpus;
    std::vector<std::string> features;
};

struct Options {
    Inputs in;
    std::string codebook;
    std::string out;
    std::size_t k = 16384;
    std::size_t m = 12;
    float momentum = 0.99f;
    std::size_t patch = 8;
    std::size_t low = 4;
    std::uint64_t seed = 0;
    unsigned threads = default_threads();
    std::size_t epochs = 10;
    std::size_t batch = 4096;
    std::size_t dead_epochs = 2;
    std::string init = "kmeans++";

    std::string image;
    std::string mode = "generation";
    std::string text;
    std::string ids;
    std::uint32_t text_vocab = 0;
    std::string save_features;
    bool l2 = false;

    std::string tokens;
    std::string reference;
    bool semantic_only = false;

    std::string seeds = "1,2,3,4,5";
    bool pooled = false;
    bool sample_variance = false;
    bool exclude_dc = false;
    bool table = false;
    bool no_flat = false;
    std::size_t flat_epochs = 5;

    std::string manifest;
};

PatchSpec patch_spec(const Options& o) {
    const PatchSpec spec{o.patch};
    spec.validate();
    if (o.low == 0 || o.low > o.patch) {
        fail(Errc::argument, "--low must lie in [1, patch], got " + std::to_string(o.low));
    }
    return spec;
}

TrainConfig train_config(const Options& o) {
    TrainConfig cfg;
    cfg.k = o.k;
    cfg.m = o.m;
    cfg.momentum = o.momentum;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.dead_code_epochs = o.dead_epochs;
    cfg.threads = o.threads;
    if (o.init == "kmeans++") {
        cfg.init = InitMethod::kmeanspp;
    } else if (o.init == "random") {
        cfg.init = InitMethod::random_sample;
    } else {
        fail(Errc::argument, "--init must be kmeans++ or random, got " + o.init);
    }
    cfg.validate();
    return cfg;
}

std::vector<fs::path> corpus_files(const std::string& dir) {
    if (!fs::is_directory(dir)) fail(Errc::io, "corpus is not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension().string();
        if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(Errc::data, "no .pgm or .ppm images in " + dir);
    return files;
}

std::vector<GrayImage> load_corpus(const std::string& dir) {
    std::vector<GrayImage> out;
    for (const auto& f : corpus_files(dir)) out.push_back(load_image(f));
    return out;
}

// Pixel DCT grids from either a corpus directory or SGHF feature files.
std::vector<FeatureGrid> load_pixel_features(const Options& o, const PatchSpec& spec) {
    if (o.in.corpus.empty() == o.in.features.empty()) {
        fail(Errc::argument, "give exactly one of --corpus or --features");
    }
    std::vector<FeatureGrid> out;
    if (!o.in.corpus.empty()) {
        for (const auto& img : load_corpus(o.in.corpus)) out.push_back(pixel_features(img, spec));
        return out;
    }
    for (const auto& f : o.in.features) {
        out.push_back(load_feature_grid(f));
        if (out.back().dim() != spec.patch * spec.patch) {
            fail(Errc::shape, f + ": feature dim " + std::to_string(out.back().dim()) + " vs patch " +
                                  std::to_string(spec.patch) + "^2");
        }
    }
    if (out.empty()) fail(Errc::data, "no feature files");
    return out;
}

std::vector<FeatureGrid> semantic_of(const std::vector<FeatureGrid>& pix, const PatchSpec& spec, std::size_t low) {
    std::vector<FeatureGrid> out;
    out.reserve(pix.size());
    for (const auto& p : pix) out.push_back(low_band(p, spec.patch, low));
    return out;
}

void check_codebook_dims(const HierarchicalCodebook& hier, const PatchSpec& spec, std::size_t low) {
    if (hier.dim_sem() != low * low || hier.dim_pix() != spec.patch * spec.patch) {
        fail(Errc::shape, "codebook dims " + std::to_string(hier.dim_sem()) + "/" + std::to_string(hier.dim_pix()) +
                              " do not match --low " + std::to_string(low) + " and --patch " +
                              std::to_string(spec.patch));
    }
}

void print_metrics(const std::string& stage, const EpochMetrics& m) {
    std::cout << stage << ' ' << format_metrics(m) << '\n' << std::flush;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << text)) fail(Errc::io, "cannot write " + path);
}

std::string read_text(const std::string& path) {
    const auto bytes = read_file(path);
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

FrameMode frame_mode(const std::string& s) {
    if (s == "generation") return FrameMode::generation;
    if (s == "understanding") return FrameMode::understanding;
    fail(Errc::argument, "--mode must be generation or understanding, got " + s);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::uint64_t v = 0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size()) {
            fail(Errc::argument, "bad seed list: " + s);
        }
        out.push_back(v);
    }
    if (out.empty()) fail(Errc::argument, "empty seed list");
    return out;
}

void cmd_train_semantic(const Options& o) {
    const auto spec = patch_spec(o);
    const auto cfg = train_config(o);
    const auto pix = load_pixel_features(o, spec);
    const auto sem = semantic_of(pix, spec, o.low);
    auto result = train_semantic_codebook(sem, cfg, [](const EpochMetrics& m) { print_metrics("semantic", m); });
    const auto hier = HierarchicalCodebook::with_empty_subs(std::move(result.codebook), cfg.m, spec.patch * spec.patch);
    save_codebook(hier, o.out);
    std::cout << "wrote " << o.out << " k=" << hier.k() << " m=" << hier.m() << " semantic_digest="
              << hex64(semantic_digest(hier.semantic())) << '\n';
}

void cmd_train_pixel(Options o, bool m_given) {
    const auto spec = patch_spec(o);
    const auto input = read_file(o.codebook);
    const auto hier = decode_codebook(input);
    if (!hier.semantic().frozen()) fail(Errc::contract, "pixel training needs a frozen semantic codebook");
    check_codebook_dims(hier, spec, o.low);
    o.k = hier.k();
    if (!m_given) o.m = hier.m();
    const auto cfg = train_config(o);
    const auto before = semantic_digest(hier.semantic());

    const auto pix = load_pixel_features(o, spec);
    const auto sem = semantic_of(pix, spec, o.low);
    const auto result = train_pixel_subcodebooks(sem, pix, hier.semantic(), cfg,
                                                 [](const EpochMetrics& m) { print_metrics("pixel", m); });
    const auto after = semantic_digest(result.codebook.semantic());
    const bool unchanged = before == after && result.codebook.semantic() == hier.semantic();
    std::cout << "semantic unchanged: " << (unchanged ? "true" : "false") << '\n';
    if (!unchanged) fail(Errc::contract, "semantic codebook changed during pixel training");
    save_codebook(result.codebook, o.out);
    std::cout << "wrote " << o.out << " semantic_digest=" << hex64(after) << '\n';
}

void cmd_quantize(const Options& o) {
    const auto spec = patch_spec(o);
    const auto hier = load_codebook(o.codebook);
    check_codebook_dims(hier, spec, o.low);
    FeatureGrid pix;
    if (!o.image.empty()) {
        pix = pixel_features(load_image(o.image), spec);
    } else if (o.in.features.size() == 1) {
        pix = load_feature_grid(o.in.features.front());
        if (pix.dim() != spec.patch * spec.patch) fail(Errc::shape, "feature dim does not match --patch");
    } else {
        fail(Errc::argument, "give --image or a single --features file");
    }
    if (!o.save_features.empty()) save_feature_grid(pix, o.save_features);

    QuantizeOptions qo;
    qo.threads = o.threads;
    qo.l2_normalize = o.l2;
    const auto q = quantize_hierarchical(low_band(pix, spec.patch, o.low), pix, hier, qo);
    const auto frame = frame_image(q.tokens, frame_mode(o.mode));
    const auto text = frame_to_text(frame);

    std::ostringstream file;
    file << kTokenHeader << '\n'
         << q.tokens.height() << ' ' << q.tokens.width() << ' ' << q.tokens.m() << '\n'
         << text << '\n';
    write_text(o.out, file.str());
    if (!o.text.empty()) write_text(o.text, text + '\n');
    if (!o.ids.empty()) {
        const VocabLayout layout(o.text_vocab, static_cast<std::uint32_t>(hier.vocab_size()));
        const std::vector<VocabFrame> frames{frame};
        save_id_stream(assemble_stream({}, frames, layout).ids, o.ids);
    }
    std::ostringstream os;
    os.precision(9);
    os << "tokens=" << q.tokens.cells() << " height=" << q.tokens.height() << " width=" << q.tokens.width()
       << " sem_distortion=" << q.sem_distortion << " pix_distortion=" << q.pix_distortion;
    std::cout << os.str() << '\n';
}

TokenGrid read_token_file(const std::string& path, const HierarchicalCodebook& hier) {
    const auto content = read_text(path);
    std::istringstream in(content);
    std::string header, dims;
    if (!std::getline(in, header) || header != kTokenHeader) fail(Errc::frame, path + ": missing token header");
    if (!std::getline(in, dims)) fail(Errc::frame, path + ": missing grid shape");
    std::istringstream ds(dims);
    std::size_t h = 0, w = 0, m = 0;
    std::string rest;
    if (!(ds >> h >> w >> m) || (ds >> rest) || h == 0 || w == 0) fail(Errc::frame, path + ": bad grid shape");
    if (m != hier.m()) {
        fail(Errc::frame, path + ": token m " + std::to_string(m) + " vs codebook m " + std::to_string(hier.m()));
    }
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto frame = frame_from_text(text, hier.vocab_size());
    return parse_frame(frame, h, w, static_cast<Index>(m));
}

void cmd_reconstruct(const Options& o) {
    const auto spec = patch_spec(o);
    FeatureGrid pix;
    if (!o.tokens.empty()) {
        const auto hier = load_codebook(o.codebook);
        check_codebook_dims(hier, spec, o.low);
        const auto tokens = read_token_file(o.tokens, hier);
        pix = o.semantic_only ? embed_low_band(dequantize_semantic(tokens, hier), spec.patch)
                              : dequantize_pixel(tokens, hier);
    } else if (o.in.features.size() == 1) {
        pix = load_feature_grid(o.in.features.front());
        if (pix.dim() != spec.patch * spec.patch) fail(Errc::shape, "feature dim does not match --patch");
        if (o.semantic_only) pix = embed_low_band(low_band(pix, spec.patch, o.low), spec.patch);
    } else {
        fail(Errc::argument, "give --tokens with --codebook, or a single --features file");
    }
    const auto img = reconstruct_image(pix, spec);
    save_pgm(img, o.out);
    std::cout << "wrote " << o.out << " height=" << img.height() << " width=" << img.width() << '\n';
    if (!o.reference.empty()) {
        const auto ref = center_crop(load_image(o.reference), spec);
        const auto m = reconstruction_metrics(ref, img);
        std::ostringstream os;
        os.precision(9);
        os << "mse=" << m.mse << " psnr=" << m.psnr;
        std::cout << os.str() << '\n';
    }
}

void cmd_vrr(const Options& o) {
    const auto spec = patch_spec(o);
    const auto hier = load_codebook(o.codebook);
    check_codebook_dims(hier, spec, o.low);
    const auto corpus = load_corpus(o.in.corpus);
    VrrExperimentConfig xc;
    xc.spec = spec;
    xc.low = o.low;
    xc.seeds = parse_seeds(o.seeds);
    xc.options.weighting = o.pooled ? VarianceWeighting::pooled : VarianceWeighting::unweighted;
    xc.options.kind = o.sample_variance ? VarianceKind::sample : VarianceKind::population;
    xc.options.exclude_dc = o.exclude_dc;
    xc.include_flat = !o.no_flat;
    xc.flat_epochs = o.flat_epochs;
    xc.threads = o.threads;
    const auto report = vrr_experiment(corpus, hier, xc);
    const auto text = o.table ? format_vrr_table(report) : format_vrr_report(report);
    if (!o.out.empty()) write_text(o.out, text);
    std::cout << text;
}

void cmd_export_vocab(const Options& o) {
    const auto hier = load_codebook(o.codebook);
    const auto table = export_embedding_table(hier);
    save_feature_grid(FeatureGrid(table.rows(), 1, table.cols(),
                                  std::vector<float>(table.values().begin(), table.values().end())),
                      o.out);
    if (!o.manifest.empty()) {
        const VocabLayout layout(o.text_vocab, static_cast<std::uint32_t>(hier.vocab_size()));
        std::ofstream f(o.manifest, std::ios::binary);
        if (!f) fail(Errc::io, "cannot write " + o.manifest);
        const std::pair<AtomKind, std::string_view> specials[] = {{AtomKind::im_start, kImStart},
                                                                  {AtomKind::im_end, kImEnd},
                                                                  {AtomKind::start_image, kStartOfImage},
                                                                  {AtomKind::end_image, kEndOfImage}};
        for (const auto& [kind, name] : specials) f << layout.special_id(kind) << '\t' << name << '\n';
        for (Index h = 0; h < hier.vocab_size(); ++h) {
            f << layout.image_id(h) << '\t' << token_string(h, hier.vocab_size()) << '\n';
        }
        if (!f) fail(Errc::io, "cannot write " + o.manifest);
    }
    std::cout << "rows=" << table.rows() << " cols=" << table.cols() << " d_sem=" << hier.dim_sem()
              << " d_pix=" << hier.dim_pix() << '\n';
}

void cmd_stats(const Options& o) {
    const auto hier = load_codebook(o.codebook);
    std::ostringstream os;
    os.precision(9);
    os << "k=" << hier.k() << "\nm=" << hier.m() << "\nd_sem=" << hier.dim_sem() << "\nd_pix=" << hier.dim_pix()
       << "\nmomentum=" << hier.momentum() << "\nfrozen=" << (hier.semantic().frozen() ? "true" : "false")
       << "\nvocab_size=" << hier.vocab_size() << "\nsemantic_digest=" << hex64(semantic_digest(hier.semantic()))
       << '\n';
    if (!o.in.corpus.empty() || !o.in.features.empty()) {
        const auto spec = patch_spec(o);
        check_codebook_dims(hier, spec, o.low);
        const auto pix = load_pixel_features(o, spec);
        QuantizeOptions qo;
        qo.threads = o.threads;
        std::vector<Index> sem_idx, flat_idx;
        std::size_t cells = 0;
        for (const auto& p : pix) {
            const auto q = quantize_hierarchical(low_band(p, spec.patch, o.low), p, hier, qo);
            sem_idx.insert(sem_idx.end(), q.tokens.sem_idx().begin(), q.tokens.sem_idx().end());
            flat_idx.insert(flat_idx.end(), q.tokens.flat_idx().begin(), q.tokens.flat_idx().end());
            cells += q.tokens.cells();
        }
        os << "cells=" << cells << "\nsemantic_usage_percent=" << compute_usage(sem_idx, hier.k()).usage_percent
           << "\nflat_usage_percent=" << compute_usage(flat_idx, hier.vocab_size()).usage_percent << '\n';
    }
    std::cout << os.str();
}

void add_inputs(CLI::App* cmd, Options& o) {
    cmd->add_option("--corpus", o.in.corpus, "directory of .pgm/.ppm images");
    cmd->add_option("--features", o.in.features, "SGHF pixel feature files");
}

void add_patch(CLI::App* cmd, Options& o) {
    cmd->add_option("--patch", o.patch, "patch side P")->capture_default_str();
    cmd->add_option("--low", o.low, "semantic low band L")->capture_default_str();
}

void add_training(CLI::App* cmd, Options& o) {
    cmd->add_option("--momentum", o.momentum, "EMA momentum")->capture_default_str();
    cmd->add_option("--seed", o.seed, "root seed")->capture_default_str();
    cmd->add_option("--epochs", o.epochs)->capture_default_str();
    cmd->add_option("--batch", o.batch)->capture_default_str();
    cmd->add_option("--dead-epochs", o.dead_epochs, "idle epochs before revival")->capture_default_str();
    cmd->add_option("--init", o.init, "kmeans++ or random")->capture_default_str();
}

void add_threads(CLI::App* cmd, Options& o) {
    cmd->add_option("--threads", o.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-guided hierarchical codebook quantizer"};
    app.require_subcommand(1);
    Options o;

    auto* ts = app.add_subcommand("train-semantic", "train the frozen semantic codebook");
    add_inputs(ts, o);
    add_patch(ts, o);
    add_training(ts, o);
    add_threads(ts, o);
    ts->add_option("--k", o.k, "semantic codes")->capture_default_str();
    ts->add_option("--m", o.m, "codes per pixel sub-codebook")->capture_default_str();
    ts->add_option("--out", o.out, "output codebook")->required();

    auto* tp = app.add_subcommand("train-pixel", "train pixel sub-codebooks against a frozen semantic codebook");
    add_inputs(tp, o);
    add_patch(tp, o);
    add_training(tp, o);
    add_threads(tp, o);
    auto* m_opt = tp->add_option("--m", o.m, "codes per pixel sub-codebook (default: from codebook)");
    tp->add_option("--codebook", o.codebook, "input codebook")->required();
    tp->add_option("--out", o.out, "output codebook")->required();

    auto* qz = app.add_subcommand("quantize", "tokenize one image or feature grid");
    qz->add_option("--image", o.image, "input image");
    qz->add_option("--features", o.in.features, "SGHF pixel feature file");
    add_patch(qz, o);
    add_threads(qz, o);
    qz->add_option("--codebook", o.codebook)->required();
    qz->add_option("--out", o.out, "token file")->required();
    qz->add_option("--mode", o.mode, "generation or understanding")->capture_default_str();
    qz->add_option("--text", o.text, "also write the framed token text");
    qz->add_option("--ids", o.ids, "also write the unified SGID id stream");
    qz->add_option("--text-vocab", o.text_vocab, "text vocabulary size for --ids")->capture_default_str();
    qz->add_option("--save-features", o.save_features, "write the unquantized SGHF pixel features");
    qz->add_flag("--l2", o.l2, "L2-normalize before the search");

    auto* rc = app.add_subcommand("reconstruct", "decode tokens or features back to an image");
    rc->add_option("--tokens", o.tokens, "token file");
    rc->add_option("--features", o.in.features, "SGHF pixel feature file");
    rc->add_option("--codebook", o.codebook);
    rc->add_option("--out", o.out, "output PGM")->required();
    rc->add_option("--reference", o.reference, "original image for MSE and PSNR");
    rc->add_flag("--semantic-only", o.semantic_only, "use only the semantic low band");
    add_patch(rc, o);

    auto* vr = app.add_subcommand("vrr", "variance reduction ratio report");
    vr->add_option("--corpus", o.in.corpus)->required();
    vr->add_option("--codebook", o.codebook)->required();
    vr->add_option("--seeds", o.seeds, "comma-separated random-assignment seeds")->capture_default_str();
    vr->add_flag("--pooled", o.pooled, "patch-count weighted mean of code variances");
    vr->add_flag("--sample", o.sample_variance, "divide by n - 1");
    vr->add_flag("--exclude-dc", o.exclude_dc, "drop the DC coefficient");
    vr->add_flag("--table", o.table, "tab-separated output");
    vr->add_flag("--no-flat", o.no_flat, "skip the flat codebook baseline");
    vr->add_option("--flat-epochs", o.flat_epochs)->capture_default_str();
    vr->add_option("--out", o.out, "also write the report here");
    add_patch(vr, o);
    add_threads(vr, o);

    auto* ev = app.add_subcommand("export-vocab", "embedding table and token manifest");
    ev->add_option("--codebook", o.codebook)->required();
    ev->add_option("--out", o.out, "SGHF table, one row per flat token")->required();
    ev->add_option("--manifest", o.manifest, "id and token string per line");
    ev->add_option("--text-vocab", o.text_vocab, "text vocabulary size")->capture_default_str();

    auto* st = app.add_subcommand("stats", "codebook summary and usage");
    st->add_option("--codebook", o.codebook)->required();
    add_inputs(st, o);
    add_patch(st, o);
    add_threads(st, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: argument: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*ts) cmd_train_semantic(o);
        if (*tp) cmd_train_pixel(o, m_opt->count() > 0);
        if (*qz) cmd_quantize(o);
        if (*rc) cmd_reconstruct(o);
        if (*vr) cmd_vrr(o);
        if (*ev) cmd_export_vocab(o);
        if (*st) cmd_stats(o);
    } catch (const Error& e) {
        std::cerr << "error: " << errc_name(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << '\n';
        return 1;
    } catch (const std::bad_alloc&) {
        std::cerr << "error: io: out of memory\n";
        return 1;
    }
    return 0;
}
