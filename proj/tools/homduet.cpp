#include "homduet/commands.hpp"

int main(int argc, char** argv) { return homduet::cli::run(argc, argv); }
