fn main() -> anyhow::Result<()> {
    qrelax_cli::run(std::env::args_os())
}
