// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "fpflab/verification.hpp"

int main(int argc, char** argv) {
    std::vector<int> ids;
    for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
    int failed = 0;
    fpf::verify::run_all(ids, [&](const fpf::verify::CriterionResult& r) {
        std::printf("%s\n", fpf::verify::format_line(r).c_str());
        std::fflush(stdout);
        if (!r.passed) ++failed;
    });
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
