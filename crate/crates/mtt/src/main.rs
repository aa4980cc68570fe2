#[global_allocator]
static ALLOC: mtt::memory::TrackingAlloc = mtt::memory::TrackingAlloc;

fn main() {
    std::process::exit(mtt::cli::main_with_args(std::env::args_os()));
}
