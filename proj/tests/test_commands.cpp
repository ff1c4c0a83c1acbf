#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "json.hpp"
#include "paano/checkpoint.hpp"
#include "paano/series_io.hpp"
#include "test_util.hpp"

namespace {

struct RunResult {
    int code;
    std::string out;
    std::string err;
};

// Runs the paano executable with `args` (already shell-quoted where needed).
RunResult run_cli(const TempDir& dir, const std::string& args) {
    const std::string out = dir.file("stdout.txt");
    const std::string err = dir.file("stderr.txt");
    const std::string cmd = std::string("\"") + PAANO_CLI_PATH + "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, read_file(out), read_file(err)};
}

std::string q(const std::string& path) { return "\"" + path + "\""; }

// Training flags small enough for a unit test; the acceptance binary runs the
// defaults.
const std::string kQuick = " --iterations 3 --decay-iters 2 --batch-size 32 --w 16 ";

std::string sine_csv(std::size_t n, double period, std::uint64_t seed, std::size_t channels = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.05);
    std::ostringstream os;
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
            if (c) os << ",";
            os << std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + static_cast<double>(c)) + g(rng);
        }
        os << "\n";
    }
    return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::vector<std::string> cells_of(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// Minimal XML well-formedness check: balanced and properly nested elements,
// quoted attributes, a single root.
bool well_formed_xml(const std::string& s, std::string& why) {
    std::vector<std::string> stack;
    std::size_t roots = 0;
    std::size_t i = 0;
    while ((i = s.find('<', i)) != std::string::npos) {
        const std::size_t end = s.find('>', i);
        if (end == std::string::npos) {
            why = "unterminated tag";
            return false;
        }
        std::string tag = s.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.starts_with("?")) continue;
        if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) {
            why = "unbalanced quotes in <" + tag + ">";
            return false;
        }
        if (tag.starts_with("/")) {
            if (stack.empty() || stack.back() != tag.substr(1)) {
                why = "mismatched </" + tag.substr(1) + ">";
                return false;
            }
            stack.pop_back();
            continue;
        }
        const bool self_closing = tag.ends_with("/");
        const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
        if (stack.empty()) ++roots;
        if (!self_closing) stack.push_back(name);
    }
    if (!stack.empty()) why = "unclosed <" + stack.back() + ">";
    if (roots != 1) why = "expected one root element";
    return stack.empty() && roots == 1;
}

std::vector<std::string> polyline_points(const std::string& svg) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while ((i = svg.find("points=\"", i)) != std::string::npos) {
        i += 8;
        out.push_back(svg.substr(i, svg.find('"', i) - i));
    }
    return out;
}

std::size_t count_of(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t i = s.find(needle); i != std::string::npos; i = s.find(needle, i + 1)) ++n;
    return n;
}

}  // namespace

TEST(Cli, TrainWritesLoadableCheckpointAndLog) {
    TempDir dir;
    const auto data = dir.write("sine.csv", sine_csv(2000, 50, 1));
    const auto r = run_cli(dir, "train " + q(data) + kQuick + "--output-dir " + q(dir.file("out")));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("memory bank: 198 of 1985 patch embeddings"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("elapsed: "), std::string::npos);
    const auto [params, bank] = paano::load_checkpoint(dir.file("out/model.paab"));
    EXPECT_EQ(params.channels, 1u);
    EXPECT_EQ(params.window, 16u);
    EXPECT_EQ(bank.size(), 198u);
    const auto log = lines_of(read_file(dir.file("out/train_log.csv")));
    ASSERT_EQ(log.size(), 4u);
    EXPECT_EQ(log[0], "iter,lr,lambda,triplet_loss,pretext_loss,total_loss");
    EXPECT_EQ(cells_of(log[1]).size(), 6u);
}

TEST(Cli, SameSeedGivesIdenticalCheckpoints) {
    TempDir dir;
    const auto data = dir.write("sine.csv", sine_csv(600, 50, 2));
    for (const char* name : {"a.paab", "b.paab"}) {
        const auto r = run_cli(dir, "train " + q(data) + kQuick + "--seed 7 --deterministic true -o " + q(dir.file(name)) +
                                        " --log " + q(dir.file("log.csv")));
        ASSERT_EQ(r.code, 0) << r.err;
    }
    const auto a = read_file(dir.file("a.paab"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_file(dir.file("b.paab")));
    const auto r = run_cli(dir, "train " + q(data) + kQuick + "--seed 8 -o " + q(dir.file("c.paab")) + " --log " +
                                    q(dir.file("log.csv")));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(a, read_file(dir.file("c.paab")));
}

TEST(Cli, BankRatioFloor) {
    TempDir dir;
    // 1015 rows with w = 16 give 1000 patches.
    const auto data = dir.write("sine.csv", sine_csv(1015, 50, 3));
    const auto r = run_cli(dir, "train " + q(data) + kQuick + "--bank-ratio 0.01 --output-dir " + q(dir.file("o")));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("memory bank: 10 of 1000"), std::string::npos) << r.out;
    EXPECT_EQ(paano::load_checkpoint(dir.file("o/model.paab")).second.size(), 10u);
}

TEST(Cli, ScoreRowsNeighboursAndShuffledCopy) {
    TempDir dir;
    const std::string train_text = sine_csv(1200, 50, 4);
    const auto data = dir.write("train.csv", train_text);
    ASSERT_EQ(run_cli(dir, "train " + q(data) + " --iterations 10 --decay-iters 5 --batch-size 64 --w 16 --bank-ratio 0.5 -o " +
                               q(dir.file("m.paab")) + " --log " + q(dir.file("log.csv")))
                  .code,
              0);

    auto rows = lines_of(train_text);
    std::mt19937_64 rng(5);
    std::shuffle(rows.begin(), rows.end(), rng);
    std::string shuffled_text;
    for (const auto& r : rows) shuffled_text += r + "\n";
    const auto shuffled = dir.write("shuffled.csv", shuffled_text);

    for (const char* k : {"1", "3"}) {
        const auto r = run_cli(dir, "score " + q(dir.file("m.paab")) + " " + q(data) + " --k " + k + " -o " +
                                        q(dir.file(std::string("s") + k + ".csv")));
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_TRUE(r.err.empty()) << r.err;
        const auto out = lines_of(read_file(dir.file(std::string("s") + k + ".csv")));
        ASSERT_EQ(out.size(), 1201u);
        EXPECT_EQ(out[0], "t,score");
        EXPECT_EQ(cells_of(out[1])[0], "1");
        EXPECT_EQ(cells_of(out[1200])[0], "1200");
    }
    const auto r = run_cli(dir, "score " + q(dir.file("m.paab")) + " " + q(shuffled) + " -o " + q(dir.file("sh.csv")));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto own = paano::read_scores(dir.file("s3.csv")).scores;
    const auto other = paano::read_scores(dir.file("sh.csv")).scores;
    EXPECT_LT(median(own), median(other));
}

TEST(Cli, ScoreClampsLargeKWithWarning) {
    TempDir dir;
    const auto data = dir.write("sine.csv", sine_csv(115, 50, 6));  // 100 patches, bank 10
    ASSERT_EQ(run_cli(dir, "train " + q(data) + kQuick + "-o " + q(dir.file("m.paab")) + " --log " +
                               q(dir.file("log.csv")))
                  .code,
              0);
    const auto r = run_cli(dir, "score " + q(dir.file("m.paab")) + " " + q(data) + " --k 50 -o " + q(dir.file("s.csv")));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("warning: k = 50 exceeds the memory bank size 10"), std::string::npos) << r.err;
    EXPECT_EQ(lines_of(read_file(dir.file("s.csv"))).size(), 116u);
}

TEST(Cli, ScoreRejectsChannelMismatch) {
    TempDir dir;
    const auto uni = dir.write("uni.csv", sine_csv(200, 50, 7));
    const auto multi = dir.write("multi.csv", sine_csv(200, 50, 7, 2));
    ASSERT_EQ(run_cli(dir, "train " + q(uni) + kQuick + "-o " + q(dir.file("m.paab")) + " --log " +
                               q(dir.file("log.csv")))
                  .code,
              0);
    const auto r = run_cli(dir, "score " + q(dir.file("m.paab")) + " " + q(multi) + " -o " + q(dir.file("s.csv")));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("error: "), std::string::npos);
    EXPECT_NE(r.err.find("2 channels"), std::string::npos) << r.err;
}

TEST(Cli, MissingInputFailsWithMessage) {
    TempDir dir;
    const auto r = run_cli(dir, "train " + q(dir.file("absent.csv")));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("absent.csv"), std::string::npos) << r.err;
    const auto s = run_cli(dir, "score " + q(dir.file("absent.paab")) + " " + q(dir.file("absent.csv")));
    EXPECT_NE(s.code, 0);
    EXPECT_NE(s.err.find("absent.paab"), std::string::npos) << s.err;
}

TEST(Cli, EvalReportSchemaPerfectAndInverted) {
    TempDir dir;
    std::string labels;
    std::string perfect = "t,score\n";
    std::string inverted = "t,score\n";
    for (int t = 1; t <= 300; ++t) {
        const int y = (t > 100 && t <= 110) || (t > 200 && t <= 204);
        labels += std::to_string(y) + "\n";
        perfect += std::to_string(t) + "," + std::to_string(y) + "\n";
        inverted += std::to_string(t) + "," + std::to_string(-y) + "\n";
    }
    const auto lab = dir.write("labels.csv", labels);
    const auto r = run_cli(dir, "eval " + q(dir.write("p.csv", perfect)) + " " + q(lab) + " --lag 0 -o " +
                                    q(dir.file("report.json")));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = nlohmann::json::parse(read_file(dir.file("report.json")));
    std::set<std::string> keys;
    for (const auto& [k, v] : report.items()) keys.insert(k);
    EXPECT_EQ(keys, (std::set<std::string>{"vus_pr", "vus_roc", "range_f1", "auc_pr", "auc_roc", "point_f1", "lag_L"}));
    for (const char* k : {"vus_pr", "vus_roc", "range_f1", "auc_pr", "auc_roc", "point_f1"}) {
        EXPECT_EQ(report[k].get<double>(), 1.0) << k;
    }
    EXPECT_EQ(report["lag_L"].get<int>(), 0);
    EXPECT_EQ(nlohmann::json::parse(r.out), report);

    const auto inv = run_cli(dir, "eval " + q(dir.write("i.csv", inverted)) + " " + q(lab));
    ASSERT_EQ(inv.code, 0) << inv.err;
    const auto ir = nlohmann::json::parse(inv.out);
    EXPECT_EQ(ir["auc_roc"].get<double>(), 0.0);
    // Without --lag or --data the lag falls back to min(100, N/4).
    EXPECT_EQ(ir["lag_L"].get<int>(), 75);

    // --data estimates the lag from the series.
    const auto series = dir.write("series.csv", sine_csv(300, 30, 1));
    const auto dr = run_cli(dir, "eval " + q(dir.file("p.csv")) + " " + q(lab) + " --data " + q(series));
    ASSERT_EQ(dr.code, 0) << dr.err;
    EXPECT_NEAR(nlohmann::json::parse(dr.out)["lag_L"].get<int>(), 30, 1);
}

TEST(Cli, EvalErrors) {
    TempDir dir;
    const auto scores = dir.write("s.csv", "t,score\n1,0.1\n2,0.2\n3,0.3\n");
    const auto short_labels = dir.write("l2.csv", "0\n1\n");
    const auto one_class = dir.write("l1.csv", "0\n0\n0\n");
    const auto a = run_cli(dir, "eval " + q(scores) + " " + q(short_labels));
    EXPECT_NE(a.code, 0);
    EXPECT_NE(a.err.find("length mismatch"), std::string::npos) << a.err;
    const auto b = run_cli(dir, "eval " + q(scores) + " " + q(one_class));
    EXPECT_NE(b.code, 0);
    EXPECT_NE(b.err.find("error: "), std::string::npos);
}

class BenchTest : public ::testing::Test {
protected:
    void SetUp() override {
        std::filesystem::create_directories(dir.file("bench"));
        for (int i = 0; i < 3; ++i) {
            const std::string base = dir.file("bench/s" + std::to_string(i));
            dir.write("bench/s" + std::to_string(i) + ".train.csv", sine_csv(300, 25 + 5 * i, 10 + i));
            std::string test = sine_csv(200, 25 + 5 * i, 20 + i);
            auto rows = lines_of(test);
            std::string labels;
            for (std::size_t t = 0; t < rows.size(); ++t) {
                const bool anomaly = t >= 120 && t < 126;
                if (anomaly) rows[t] = "4.0";
                labels += anomaly ? "1\n" : "0\n";
            }
            test.clear();
            for (const auto& r : rows) test += r + "\n";
            dir.write("bench/s" + std::to_string(i) + ".test.csv", test);
            dir.write("bench/s" + std::to_string(i) + ".labels.csv", labels);
        }
    }

    // Data rows of the bench CSV, keyed by their first cell.
    std::vector<std::vector<std::string>> bench_rows(const std::string& path) {
        const auto lines = lines_of(read_file(path));
        std::vector<std::vector<std::string>> out;
        for (std::size_t i = 1; i < lines.size(); ++i) out.push_back(cells_of(lines[i]));
        return out;
    }

    TempDir dir;
};

TEST_F(BenchTest, RowsPerSeriesPlusMean) {
    const auto r = run_cli(dir, "bench " + q(dir.file("bench")) + kQuick + "-o " + q(dir.file("bench.csv")));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = lines_of(read_file(dir.file("bench.csv")));
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "series,vus_pr,vus_roc,range_f1,auc_pr,auc_roc,point_f1,lag_L,seconds,status");
    const auto rows = bench_rows(dir.file("bench.csv"));
    EXPECT_EQ(rows[0][0], "s0");
    EXPECT_EQ(rows[2][0], "s2");
    EXPECT_EQ(rows[3][0], "mean");
    for (std::size_t col = 1; col <= 7; ++col) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 3; ++i) sum += std::stod(rows[i][col]);
        EXPECT_NEAR(std::stod(rows[3][col]), sum / 3.0, 1e-9) << lines[0] << " column " << col;
    }
    for (const auto& row : rows) EXPECT_EQ(row.back(), "ok");
}

TEST_F(BenchTest, SweepDoublesRows) {
    const auto r = run_cli(dir, "bench " + q(dir.file("bench")) + kQuick + "--sweep k=1,3 -o " + q(dir.file("bench.csv")));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = lines_of(read_file(dir.file("bench.csv")));
    ASSERT_EQ(lines.size(), 9u);
    EXPECT_TRUE(lines[0].starts_with("series,k,vus_pr"));
    const auto rows = bench_rows(dir.file("bench.csv"));
    std::size_t means = 0;
    for (const auto& row : rows) means += row[0] == "mean";
    EXPECT_EQ(means, 2u);
    EXPECT_EQ(rows[0][1], "1");
    EXPECT_EQ(rows[3][1], "3");
}

TEST_F(BenchTest, FailingSeriesIsSkippedAndReported) {
    dir.write("bench/broken.train.csv", "1\n2\n3\n");
    dir.write("bench/broken.test.csv", "1\n2\n");
    dir.write("bench/broken.labels.csv", "0\n1\n");
    const auto r = run_cli(dir, "bench " + q(dir.file("bench")) + kQuick + "-o " + q(dir.file("bench.csv")));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("skipping broken"), std::string::npos) << r.err;
    const auto rows = bench_rows(dir.file("bench.csv"));
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0][0], "broken");
    EXPECT_TRUE(rows[0].back().starts_with("\"error") || rows[0].back().starts_with("error")) << rows[0].back();
    EXPECT_EQ(rows[4][0], "mean");
    EXPECT_EQ(rows[4].back(), "ok");
}

TEST(Cli, PlotWellFormedWithSegments) {
    TempDir dir;
    const auto data = dir.write("x.csv", sine_csv(500, 50, 1));
    std::string scores = "t,score\n";
    std::string labels;
    for (int t = 1; t <= 500; ++t) {
        scores += std::to_string(t) + "," + std::to_string(t % 7) + "\n";
        labels += (t > 100 && t <= 120) || (t > 300 && t <= 305) ? "1\n" : "0\n";
    }
    const auto sc = dir.write("s.csv", scores);
    const auto lab = dir.write("l.csv", labels);
    const auto r = run_cli(dir, "plot " + q(data) + " " + q(sc) + " --labels " + q(lab) + " -o " + q(dir.file("p.svg")));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto svg = read_file(dir.file("p.svg"));
    std::string why;
    EXPECT_TRUE(well_formed_xml(svg, why)) << why;
    EXPECT_EQ(count_of(svg, "class=\"anomaly\""), 2u);
    EXPECT_EQ(polyline_points(svg).size(), 2u);

    const auto bare = run_cli(dir, "plot " + q(data) + " " + q(sc) + " -o " + q(dir.file("bare.svg")));
    ASSERT_EQ(bare.code, 0) << bare.err;
    const auto bare_svg = read_file(dir.file("bare.svg"));
    EXPECT_TRUE(well_formed_xml(bare_svg, why)) << why;
    EXPECT_EQ(count_of(bare_svg, "class=\"anomaly\""), 0u);

    const auto mismatch = run_cli(dir, "plot " + q(data) + " " + q(dir.write("short.csv", "t,score\n1,0\n")));
    EXPECT_NE(mismatch.code, 0);
    EXPECT_NE(mismatch.err.find("error: "), std::string::npos);
}

TEST(Cli, PlotDownsamplesLongSeries) {
    TempDir dir;
    std::string data;
    std::string scores = "t,score\n";
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (int t = 1; t <= 100000; ++t) {
        data += std::to_string(g(rng)) + "\n";
        scores += std::to_string(t) + "," + std::to_string(g(rng)) + "\n";
    }
    const auto r = run_cli(dir, "plot " + q(dir.write("x.csv", data)) + " " + q(dir.write("s.csv", scores)) + " -o " +
                                    q(dir.file("p.svg")));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto svg = read_file(dir.file("p.svg"));
    std::string why;
    EXPECT_TRUE(well_formed_xml(svg, why)) << why;
    for (const auto& pts : polyline_points(svg)) {
        const auto n = static_cast<std::size_t>(std::count(pts.begin(), pts.end(), ','));
        EXPECT_LE(n, 4000u);
        EXPECT_GT(n, 1000u);
    }
}

TEST(Cli, PrintConfigResolvesPrecedenceAndWindow) {
    TempDir dir;
    const auto cfg = dir.write("run.cfg", "k = 7\nbank_ratio = 0.25\n");
    const auto r = run_cli(dir, "train " + q(dir.write("m.csv", sine_csv(50, 10, 1, 3))) + " --config " + q(cfg) +
                                    " --k 2 --print-config");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("k = 2\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("bank_ratio = 0.25\n"), std::string::npos);
    EXPECT_NE(r.out.find("w = 96\n"), std::string::npos);
    EXPECT_NE(r.out.find("iterations = 200\n"), std::string::npos);

    const auto explicit_w = run_cli(dir, "train " + q(dir.file("m.csv")) + " --w 32 --print-config");
    EXPECT_NE(explicit_w.out.find("w = 32\n"), std::string::npos) << explicit_w.out;

    const auto bad = run_cli(dir, "train " + q(dir.file("m.csv")) + " --config " + q(dir.write("bad.cfg", "z = 1\n")));
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.err.find("bad.cfg:1"), std::string::npos) << bad.err;
}
