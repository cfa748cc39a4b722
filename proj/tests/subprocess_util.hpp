#pragma once

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace test_util {

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

// Runs a shell command, capturing combined output.
inline CommandResult run_command(const std::string& command) {
  const auto out_path = std::filesystem::temp_directory_path() /
                        ("dqbc_cmd_" + std::to_string(::getpid()) + ".out");
  const std::string full = command + " > " + out_path.string() + " 2>&1";
  const int status = std::system(full.c_str());
  CommandResult result;
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  }
  std::ifstream f(out_path);
  std::stringstream ss;
  ss << f.rdbuf();
  result.output = ss.str();
  std::filesystem::remove(out_path);
  return result;
}

}  // namespace test_util
