from windmix.cli import main

raise SystemExit(main())
