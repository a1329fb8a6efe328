fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let code = graphrule_service::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
