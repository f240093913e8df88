use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("SDCPS_LOG", "off")).init();
    std::process::exit(sdcps_core::cli::main_with(std::env::args_os()));
}
