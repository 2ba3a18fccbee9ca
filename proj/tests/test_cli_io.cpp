#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lbridge/checkpoint.hpp"
#include "lbridge/errors.hpp"
#include "lbridge/experiment.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/translator.hpp"
#include "lbridge/vector_store.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace lbridge;
using namespace lbridge::testutil;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() /
                         ("lbridge_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ToyModel tiny_model() {
    ToyModelConfig cfg;
    cfg.vocab_size = 64;
    cfg.d_model = 8;
    cfg.n_layers = 3;
    cfg.n_heads = 2;
    cfg.context_len = 12;
    cfg.seed = 17;
    return init_model(cfg);
}

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string("\"") + LBRIDGE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("model checkpoints round-trip bitwise and saves are byte-stable") {
    const fs::path dir = fresh_dir("model");
    const ToyModel model = tiny_model();
    const fs::path p1 = dir / "m1.toym";
    const fs::path p2 = dir / "m2.toym";
    save_model(model, p1.string());
    save_model(model, p2.string());
    CHECK(read_bytes(p1) == read_bytes(p2));

    const ToyModel back = load_model(p1.string());
    CHECK(back.config.vocab_size == model.config.vocab_size);
    CHECK(back.config.d_model == model.config.d_model);
    CHECK(back.config.n_layers == model.config.n_layers);
    CHECK(back.config.n_heads == model.config.n_heads);
    CHECK(back.config.context_len == model.config.context_len);
    CHECK(back.config.seed == model.config.seed);
    CHECK(bitwise_equal(back.params, model.params));

    // Saving the loaded copy reproduces the original file exactly.
    const fs::path p3 = dir / "m3.toym";
    save_model(back, p3.string());
    CHECK(read_bytes(p3) == read_bytes(p1));
    fs::remove_all(dir);
}

TEST_CASE("translator checkpoints round-trip bitwise") {
    const fs::path dir = fresh_dir("translator");
    const TranslatorParams params = identity_translator(4);
    const fs::path p = dir / "t.lbtr";
    save_translator(params, p.string());
    const TranslatorParams back = load_translator(p.string());
    CHECK(back.config.d_src == params.config.d_src);
    CHECK(back.config.d_tgt == params.config.d_tgt);
    CHECK(back.config.d_hidden == params.config.d_hidden);
    CHECK(back.config.n_heads == params.config.n_heads);
    CHECK(back.config.n_slots == params.config.n_slots);
    CHECK(back.config.activation == params.config.activation);
    CHECK(bitwise_equal(back.params, params.params));
    fs::remove_all(dir);
}

TEST_CASE("corrupted checkpoints fail with pointed messages") {
    const fs::path dir = fresh_dir("corrupt");
    const fs::path p = dir / "m.toym";
    save_model(tiny_model(), p.string());
    const std::string good = read_bytes(p);

    auto expect_load_error = [&](const std::string& bytes, const std::string& needle) {
        const fs::path bad = dir / "bad.toym";
        write_bytes(bad, bytes);
        CHECK(throws_with<DataError>([&] { load_model(bad.string()); }, needle));
    };

    std::string magic = good;
    magic[0] = 'X';
    expect_load_error(magic, "bad magic");

    std::string version = good;
    version[4] = 2;
    expect_load_error(version, "unsupported version 2 (expected 1)");

    std::string heads = good;
    heads[20] = 5;  // n_heads no longer divides d_model
    expect_load_error(heads, "invalid config");

    expect_load_error(good.substr(0, good.size() - 10), "unexpected end of file");
    expect_load_error(good + "abc", "trailing");

    // A translator file is not a model file.
    const fs::path t = dir / "t.lbtr";
    save_translator(identity_translator(4), t.string());
    CHECK(throws_with<DataError>([&] { load_model(t.string()); }, "bad magic"));
    CHECK(throws_with<DataError>([&] { load_translator(p.string()); }, "bad magic"));

    CHECK(throws_with<DataError>(
        [&] { load_model((dir / "missing.toym").string()); }, "cannot open"));
    fs::remove_all(dir);
}

TEST_CASE("vector stores round-trip and validate their framing") {
    const fs::path dir = fresh_dir("store");
    Tensor rows({3, 4});
    for (size_t i = 0; i < rows.data.size(); ++i) {
        rows.data[i] = 0.5f * static_cast<float>(i) - 2.0f;
    }
    const VectorStore store = make_vector_store({7, 9, 11}, rows);
    const fs::path p = dir / "v.lvec";
    save_vector_store(store, p.string());
    const VectorStore back = load_vector_store(p.string());
    CHECK(back.ids == std::vector<uint32_t>{7, 9, 11});
    CHECK(back.dim == 4);
    CHECK(bitwise_equal(back.vectors, store.vectors));

    const std::string good = read_bytes(p);
    write_bytes(p, good.substr(0, good.size() - 4));
    CHECK(throws_with<DataError>([&] { load_vector_store(p.string()); },
                                 "does not match header"));
    write_bytes(p, good + "Z");
    CHECK(throws_with<DataError>([&] { load_vector_store(p.string()); },
                                 "does not match header"));

    CHECK(throws_with<ShapeError>(
        [&] { make_vector_store({1, 2}, Tensor({3, 4})); }, "ids"));
    CHECK(throws_with<ShapeError>(
        [&] { make_vector_store({1, 2, 3}, Tensor({3})); }, "[count, dim]"));
    fs::remove_all(dir);
}

TEST_CASE("prompt files parse with line-accurate errors") {
    const fs::path dir = fresh_dir("prompts");
    const fs::path p = dir / "p.tsv";

    write_bytes(p, "ml\tfull one\tpart one\r\n\nqc\tfull two\tpart two\n");
    const std::vector<PromptEntry> entries = load_prompts(p.string());
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].domain == "ml");
    CHECK(entries[0].full == "full one");
    CHECK(entries[0].part == "part one");  // carriage return stripped
    CHECK(entries[1].domain == "qc");

    write_bytes(p, "ml\tfull\tpart\n\nml\tonly two fields\n");
    CHECK(throws_with<DataError>([&] { load_prompts(p.string()); },
                                 "line 3: expected 3 tab-separated fields"));

    write_bytes(p, "ml\ta\tb\tc\n");
    CHECK(throws_with<DataError>([&] { load_prompts(p.string()); },
                                 "expected 3 tab-separated fields"));

    write_bytes(p, "ml\t\tpart\n");
    CHECK(throws_with<DataError>([&] { load_prompts(p.string()); }, "line 1: empty field"));

    write_bytes(p, "\n\n");
    CHECK(throws_with<DataError>([&] { load_prompts(p.string()); }, "no entries"));

    CHECK(throws_with<DataError>(
        [&] { load_prompts((dir / "absent.tsv").string()); }, "cannot open"));
    fs::remove_all(dir);
}

TEST_CASE("the command line tool reports usage and data errors by exit code") {
    CHECK(run_cli("") == 1);
    CHECK(run_cli("no-such-verb") == 1);
    CHECK(run_cli("eval-bridge") == 1);  // --config is required
    CHECK(run_cli("eval-bridge --config /nonexistent/config.json") == 2);
    CHECK(run_cli("extract --config " LBRIDGE_SOURCE_DIR
                  "/configs/mini.json --model a --out /tmp/lbridge_no_models") == 2);
}

TEST_CASE("eval-bridge then inject-generate produce the documented artifacts") {
    const fs::path dir = fresh_dir("cli");
    const std::string base = std::string("--config " LBRIDGE_SOURCE_DIR
                                         "/configs/mini.json --out ") +
                             dir.string();
    REQUIRE(run_cli("eval-bridge " + base) == 0);
    for (const char* name :
         {"model_a.toym", "model_b.toym", "vectors_a_full.lvec", "vectors_b_full.lvec",
          "translator_forward.lbtr", "translator_reverse.lbtr", "history_forward.json",
          "history_reverse.json", "report.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(dir / name));
    }
    const nlohmann::json report = nlohmann::json::parse(read_bytes(dir / "report.json"));
    CHECK(report.contains("forward"));
    CHECK(report.contains("reverse"));

    REQUIRE(run_cli("inject-generate " + base + " --prompt-index 3") == 0);
    const nlohmann::json inj = nlohmann::json::parse(read_bytes(dir / "inject_3.json"));
    CHECK(inj["prompt_index"] == 3);
    CHECK(inj["kl_per_step"].is_array());
    CHECK(inj.contains("baseline_text"));
    CHECK(inj.contains("injected_text"));
    CHECK(inj.contains("reference_text"));

    CHECK(run_cli("inject-generate " + base + " --prompt-index 999") == 2);
    fs::remove_all(dir);
}
