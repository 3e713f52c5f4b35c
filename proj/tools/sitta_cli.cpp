#include "sitta/pipeline.hpp"

int main(int argc, char** argv) { return sitta::pipeline::run_cli(argc, argv); }
