#include "zsflow/cli/app.hpp"

int main(int argc, char** argv) { return zsflow::cli::run(argc, argv); }
