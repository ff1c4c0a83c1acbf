#include <gtest/gtest.h>

#include "paano/config.hpp"
#include "test_util.hpp"

using namespace paano;

TEST(Config, Defaults) {
    const RunConfig c;
    EXPECT_EQ(c.train.w, 64u);
    EXPECT_EQ(c.train.iterations, 200u);
    EXPECT_EQ(c.train.batch_size, 512u);
    EXPECT_EQ(c.train.lr, 1e-4);
    EXPECT_EQ(c.train.weight_decay, 1e-4);
    EXPECT_EQ(c.train.margin, 0.5);
    EXPECT_EQ(c.train.negative, NegativeStrategy::Farthest);
    EXPECT_EQ(c.train.lambda_schedule, LambdaSchedule::Linear);
    EXPECT_EQ(c.bank_ratio, 0.1);
    EXPECT_EQ(c.k, 3u);
    EXPECT_EQ(c.output_dir, ".");
}

TEST(Config, MultivariateWindowDefault) {
    RunConfig c;
    EXPECT_EQ(c.window_for(1), 64u);
    EXPECT_EQ(c.window_for(5), 96u);
    EXPECT_EQ(c.train_config_for(5).w, 96u);
    set_config_value(c, "w", "40");
    EXPECT_EQ(c.window_for(5), 40u);
    EXPECT_EQ(c.window_for(1), 40u);
}

TEST(Config, FileParsing) {
    RunConfig c;
    apply_config_text(c,
                      "# comment line\n"
                      "\n"
                      "iterations = 25   # trailing comment\n"
                      "  lr=0.002\n"
                      "negative = random\n"
                      "lambda_schedule = constant\n"
                      "deterministic = false\n"
                      "seed = 18446744073709551615\n"
                      "output_dir = out dir\n");
    EXPECT_EQ(c.train.iterations, 25u);
    EXPECT_EQ(c.train.lr, 0.002);
    EXPECT_EQ(c.train.negative, NegativeStrategy::Random);
    EXPECT_EQ(c.train.lambda_schedule, LambdaSchedule::Constant);
    EXPECT_FALSE(c.train.deterministic);
    EXPECT_EQ(c.train.seed, 18446744073709551615ull);
    EXPECT_EQ(c.output_dir, "out dir");
    EXPECT_FALSE(c.window_set);
}

TEST(Config, ErrorsNameTheLine) {
    RunConfig c;
    auto message = [&](const std::string& text) {
        try {
            apply_config_text(c, text, "run.cfg");
        } catch (const DataError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message("k = 3\nbogus = 1\n").find("run.cfg:2"), std::string::npos);
    EXPECT_NE(message("k = 3\nbogus = 1\n").find("bogus"), std::string::npos);
    EXPECT_NE(message("iterations = ten\n").find("run.cfg:1"), std::string::npos);
    EXPECT_NE(message("k 3\n").find("expected 'key = value'"), std::string::npos);
    EXPECT_NE(message("negative = nearest\n").find("nearest"), std::string::npos);
    EXPECT_NE(message("deterministic = maybe\n").find("maybe"), std::string::npos);
    EXPECT_NE(message("k = -1\n").find("run.cfg:1"), std::string::npos);
}

TEST(Config, FlagsOverrideFile) {
    TempDir dir;
    const auto path = dir.write("run.cfg", "k = 7\nbank_ratio = 0.5\nw = 32\n");
    RunConfig c;
    apply_config_file(c, path);
    set_config_value(c, "k", "2");  // command-line flags are applied last
    EXPECT_EQ(c.k, 2u);
    EXPECT_EQ(c.bank_ratio, 0.5);
    EXPECT_EQ(c.train.w, 32u);
    EXPECT_TRUE(c.window_set);
    EXPECT_THROW(apply_config_file(c, dir.file("missing.cfg")), Error);
}

TEST(Config, FlagNames) {
    EXPECT_EQ(config_key("batch_size").flag(), "--batch-size");
    EXPECT_EQ(config_key("k").flag(), "--k");
    EXPECT_THROW(config_key("nope"), DataError);
    for (const auto& k : config_keys()) EXPECT_FALSE(k.help.empty()) << k.name;
}

TEST(Config, PrintedConfigRoundTrips) {
    RunConfig c;
    apply_config_text(c, "lr = 0.1\nmargin = 0.3333333333333333\nk = 9\nnegative = median\nbank_ratio = 0.01\n");
    const std::string text = format_config(c);
    for (const auto& k : config_keys()) {
        EXPECT_NE(text.find(k.name + " = "), std::string::npos) << k.name;
    }
    RunConfig again;
    apply_config_text(again, text);
    EXPECT_EQ(format_config(again), text);
    EXPECT_EQ(again.train.margin, c.train.margin);
    EXPECT_EQ(again.train.lr, 0.1);
}
