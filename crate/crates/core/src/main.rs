fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("LOSSQ_LOG")).init();
    std::process::exit(lossq::cli::run(std::env::args_os()));
}
